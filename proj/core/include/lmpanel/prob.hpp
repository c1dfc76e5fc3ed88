#pragma once

#include <Eigen/Dense>

#include "lmpanel/rng.hpp"

namespace lmpanel {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double expit(double x);

bool is_simplex(const VectorXd& v, double tol = 1e-10);
bool is_row_stochastic(const MatrixXd& m, double tol = 1e-10);

// pi with pi'P = pi' and sum(pi)=1, computed as the least-squares solution of
// the stacked system [(I - P'); 1'] pi = [0; 1]. For reducible chains this is
// the minimum-norm blend of the per-block stationary vectors (identity gives
// the uniform vector). Throws NumericalError if the residual exceeds tol.
VectorXd stationary_distribution(const MatrixXd& transition, double tol = 1e-8);

// probs[ref] = 1/(1+sum exp eta); probs[u] = exp(eta_i)/(1+sum exp eta), the
// k-1 entries of eta filling the non-reference positions in index order.
// Overflow is guarded by max subtraction.
VectorXd multinomial_logit_probs(const VectorXd& eta, int ref = 0);

// Inverse map: eta_i = log(probs[u]/probs[ref]) over non-reference positions.
VectorXd logits_from_probs(const VectorXd& probs, int ref = 0);

// Cell probabilities of the cumulative-logit link:
//   log[P(Y >= y) / P(Y < y)] = cutpoints[y-1] + shift,  y = 1..c-1.
// cutpoints must be decreasing in y; a negative cell is a NumericalError.
VectorXd global_logit_probs(const VectorXd& cutpoints, double shift);

// k uniform(0,1) draws normalized to sum one.
VectorXd random_simplex(int k, RngStream& rng);

// Row-wise random_simplex.
MatrixXd random_stochastic_matrix(int k, RngStream& rng);

}  // namespace lmpanel
