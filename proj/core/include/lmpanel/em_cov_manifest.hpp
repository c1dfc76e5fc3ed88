#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lmpanel/data.hpp"
#include "lmpanel/fit.hpp"
#include "lmpanel/rng.hpp"

namespace lmpanel {

// Univariate ordinal response with covariates in the measurement model:
//   log[P(Y >= y | u, x) / P(Y < y | u, x)] = cutpoints[y-1] + support[u] + x'regression.
// support[0] = 0 anchors the level; the chain is time-homogeneous and its
// initial distribution is the stationary distribution of `transition`.
struct CovManifestParams {
  Eigen::VectorXd cutpoints;   // c-1, strictly decreasing
  Eigen::VectorXd support;     // k, support(0) == 0
  Eigen::VectorXd regression;  // p
  Eigen::MatrixXd transition;  // k x k
  Eigen::VectorXd initial;     // stationary(transition), derived

  int k() const { return static_cast<int>(support.size()); }
  int c() const { return static_cast<int>(cutpoints.size()) + 1; }
  int p() const { return static_cast<int>(regression.size()); }
};

Eigen::VectorXd emission_probs_manifest(const CovManifestParams& params, int state,
                                        const Eigen::VectorXd& x);

int np_cov_manifest(int k, int c, int p);

// Covariates of configuration i at occasion t (0-based): X1 row at t = 0,
// X2 rows after; the variant requires p1 == p2.
Eigen::VectorXd manifest_covariates(const Dataset& ds, int i, int t);

struct CovManifestCounts {
  double loglik = 0.0;
  Eigen::VectorXd b_init;  // k
  Eigen::MatrixXd b_trans; // k x k, pooled over occasions
  Eigen::MatrixXd w_obs;   // (n_config*T) x k measurement weights, row i*T+t
};

CovManifestCounts estep_cov_manifest(const Dataset& ds, const CovManifestParams& params,
                                     int threads = 1);

// Newton ascent on the weighted cumulative-logit expected log-likelihood;
// updates (cutpoints, support, regression) in place, keeping the cut-points
// strictly decreasing by step halving. w rows follow the (x, y) observation
// rows.
struct ManifestObsTable {
  std::vector<Eigen::VectorXd> x;
  std::vector<int> y;
};
bool mstep_global_logit(const ManifestObsTable& obs, const Eigen::MatrixXd& w,
                        Eigen::VectorXd& cutpoints, Eigen::VectorXd& support,
                        Eigen::VectorXd& regression, Diagnostics& diag);

// The (x, y) observation rows of a dataset in E-step order (row i*T + t).
ManifestObsTable manifest_observation_table(const Dataset& ds);

// Gradient of the weighted measurement log-likelihood in the packed order
// (cutpoints, support[2..k], regression).
Eigen::VectorXd measurement_score(const ManifestObsTable& obs, const Eigen::MatrixXd& w,
                                  const Eigen::VectorXd& cutpoints,
                                  const Eigen::VectorXd& support,
                                  const Eigen::VectorXd& regression);

CovManifestParams deterministic_start_cov_manifest(const Dataset& ds, int k);
CovManifestParams random_start_cov_manifest(const Dataset& ds, int k, RngStream& rng);

FitResult<CovManifestParams> fit_cov_manifest(const Dataset& ds, const FitConfig& cfg,
                                              const CovManifestParams* input_start = nullptr);

}  // namespace lmpanel
