#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lmpanel/data.hpp"
#include "lmpanel/fit.hpp"
#include "lmpanel/rng.hpp"

namespace lmpanel {

// Transition coefficients in the difference parameterization: for origin
// state ubar and target u != ubar the transition logit (relative to staying
// in ubar) is intercepts(ubar,u) + x'(slopes.row(ubar) - slopes.row(u)), with
// slopes.row(0) fixed at zero for identifiability.
struct DifflogitCoef {
  Eigen::MatrixXd intercepts;  // k x k, diagonal unused (zero)
  Eigen::MatrixXd slopes;      // k x p2, row 0 zero
};

// Covariates act on the latent chain: multinomial-logit initial probabilities
// (state 1 is the reference) and either free per-row ("multilogit") or
// difference-structured ("difflogit") transition logits. Emissions are
// covariate-free and time-homogeneous.
struct CovLatentParams {
  Eigen::MatrixXd init_coef;                 // (1+p1) x (k-1), column u-2 for state u
  TransitionParam mode = TransitionParam::Multilogit;
  std::vector<Eigen::MatrixXd> trans_coef;   // multilogit: k entries, (1+p2) x (k-1)
  DifflogitCoef diff;                        // difflogit
  std::vector<Eigen::MatrixXd> emission;     // r entries, c_j x k

  int k() const { return static_cast<int>(init_coef.cols()) + 1; }
  int p1() const { return static_cast<int>(init_coef.rows()) - 1; }
  int p2() const {
    return mode == TransitionParam::Multilogit
               ? static_cast<int>(trans_coef.at(0).rows()) - 1
               : static_cast<int>(diff.slopes.cols());
  }
};

// log(pi_u / pi_1) = coef(0, u-2) + x1'coef(1.., u-2) for u = 2..k.
Eigen::VectorXd initial_probs(const Eigen::MatrixXd& init_coef, const Eigen::VectorXd& x1);

// Row ubar: log(pi_{u|ubar} / pi_{ubar|ubar}) from the respective linear
// predictor; the diagonal is the per-row reference.
Eigen::MatrixXd transition_probs_multilogit(const std::vector<Eigen::MatrixXd>& trans_coef,
                                            const Eigen::VectorXd& x2);
Eigen::MatrixXd transition_probs_difflogit(const DifflogitCoef& coef, const Eigen::VectorXd& x2);
Eigen::MatrixXd transition_probs(const CovLatentParams& params, const Eigen::VectorXd& x2);

// Every difflogit parameter set is a restriction of a multilogit set; this
// returns the equivalent free-coefficient representation.
std::vector<Eigen::MatrixXd> difflogit_to_multilogit(const DifflogitCoef& coef, int k);

int np_cov_latent(int k, int p1, int p2, TransitionParam mode, const CategorySpec& cats);

// Posterior weights from one E-step, frequencies applied.
struct CovLatentCounts {
  double loglik = 0.0;
  Eigen::MatrixXd w_init;                 // n_config x k, yv_i * gamma_i(1,·)
  std::vector<Eigen::MatrixXd> w_trans;   // n_config*(T-1) entries (i*(T-1)+t-1), k x k
  std::vector<Eigen::MatrixXd> resp;      // r entries, c_j x k
};

CovLatentCounts estep_cov_latent(const Dataset& ds, const CovLatentParams& params,
                                 int threads = 1);

// Newton maximization of the weighted multinomial log-likelihoods for the
// initial- and transition-logit coefficients; warm-started from the values in
// `params` and updated in place.
void mstep_latent_logits(const Dataset& ds, const CovLatentCounts& counts,
                         CovLatentParams& params, Diagnostics& diag);

CovLatentParams deterministic_start_cov_latent(const Dataset& ds, int k, TransitionParam mode);
CovLatentParams random_start_cov_latent(const Dataset& ds, int k, TransitionParam mode,
                                        RngStream& rng);

FitResult<CovLatentParams> fit_cov_latent(const Dataset& ds, const FitConfig& cfg,
                                          const CovLatentParams* input_start = nullptr);

}  // namespace lmpanel
