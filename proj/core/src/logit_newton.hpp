#pragma once

// Internal Newton solvers for the weighted logit M-steps.

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "lmpanel/fit.hpp"

namespace lmpanel::detail {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct NewtonStatus {
  bool converged = false;
  int iterations = 0;
};

// Maximizes a concave objective by Newton steps with ridge fallback and step
// halving. `derivs` fills the gradient and Hessian of the objective (the
// Hessian is expected negative semidefinite). Coordinates are clamped to
// [-cap, cap]; `feasible` (when set) must hold for any accepted iterate.
struct NewtonProblem {
  std::function<double(const VectorXd&)> value;
  std::function<void(const VectorXd&, VectorXd&, MatrixXd&)> derivs;
  std::function<bool(const VectorXd&)> feasible;  // optional
};

NewtonStatus newton_ascent(const NewtonProblem& prob, VectorXd& theta, double grad_tol,
                           int max_iter, double cap, Diagnostics& diag);

// Weighted multinomial-logit fit with a fixed reference category.
// Z: L x d designs; W: L x k nonnegative weights; coef: d x (k-1), one column
// per non-reference category in index order. Maximizes
//   sum_l sum_u W(l,u) log p_u(z_l'coef)  with  log(p_u/p_ref) = z'coef_u.
NewtonStatus fit_weighted_multilogit(const MatrixXd& Z, const MatrixXd& W, int ref,
                                     MatrixXd& coef, double grad_tol, int max_iter,
                                     double cap, Diagnostics& diag);

// Difference-parameterized transition logits: for origin row ubar and target
// u != ubar,
//   logit = intercepts(ubar,u) + x'(slopes.row(ubar) - slopes.row(u)),
// with slopes.row(0) fixed at zero. Each observation carries a covariate
// vector and a k x k weight matrix over (origin, target) pairs.
struct DifflogitObs {
  VectorXd x;
  MatrixXd w;  // k x k
};

NewtonStatus fit_difflogit(const std::vector<DifflogitObs>& obs, MatrixXd& intercepts,
                           MatrixXd& slopes, double grad_tol, int max_iter, double cap,
                           Diagnostics& diag);

// Gradient of the weighted difflogit log-likelihood in the packed coordinate
// order (intercepts row-major over origins, then slope rows 1..k-1).
VectorXd difflogit_gradient(const std::vector<DifflogitObs>& obs, const MatrixXd& intercepts,
                            const MatrixXd& slopes);

}  // namespace lmpanel::detail
