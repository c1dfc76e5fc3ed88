#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "lmpanel/data.hpp"
#include "lmpanel/em_basic.hpp"
#include "lmpanel/em_cov_latent.hpp"
#include "lmpanel/em_cov_manifest.hpp"
#include "lmpanel/em_mixed.hpp"
#include "lmpanel/fit.hpp"

namespace lmpanel {

// ---------------------------------------------------------------------------
// Free-parameter vector
//
// Unconstrained packing of each variant: simplex blocks become logits w.r.t.
// a reference entry (state 1 for initial/mass/emission blocks, the diagonal
// for transition rows), coefficient blocks stay raw. Boundary probabilities
// are clamped to +-50 logits and flagged. The packed length equals the
// variant's np.
// ---------------------------------------------------------------------------
struct PackedParams {
  Eigen::VectorXd theta;
  std::vector<std::string> names;
  bool clamped = false;
};

PackedParams pack_params(const BasicParams& p);
PackedParams pack_params(const CovLatentParams& p);
PackedParams pack_params(const CovManifestParams& p);
PackedParams pack_params(const MixedParams& p);

// `out` supplies the shapes (and for cov-manifest, the stationary initial
// distribution is recomputed from the unpacked transition matrix).
void unpack_params(const Eigen::VectorXd& theta, BasicParams& out);
void unpack_params(const Eigen::VectorXd& theta, CovLatentParams& out);
void unpack_params(const Eigen::VectorXd& theta, CovManifestParams& out);
void unpack_params(const Eigen::VectorXd& theta, MixedParams& out);

// Observed-data log-likelihood (forward recursion only).
double observed_loglik(const BasicParams& p, const Dataset& ds);
double observed_loglik(const CovLatentParams& p, const Dataset& ds);
double observed_loglik(const CovManifestParams& p, const Dataset& ds);
double observed_loglik(const MixedParams& p, const Dataset& ds);

// Analytic score in the packed coordinates: the gradient of the expected
// complete-data log-likelihood at the E-step weights of `p` (Fisher
// identity), including the stationary-distribution chain term for the
// cov-manifest variant.
Eigen::VectorXd score(const BasicParams& p, const Dataset& ds);
Eigen::VectorXd score(const CovLatentParams& p, const Dataset& ds);
Eigen::VectorXd score(const CovManifestParams& p, const Dataset& ds);
Eigen::VectorXd score(const MixedParams& p, const Dataset& ds);

// ---------------------------------------------------------------------------
// Standard errors
// ---------------------------------------------------------------------------
struct SEReport {
  std::string method;  // "numerical" or "bootstrap"
  Eigen::VectorXd se;  // packed coordinates; NaN on flagged entries
  std::vector<std::string> names;
  Eigen::MatrixXd info;      // numerical method: symmetrized observed information
  int B = 0;                 // bootstrap replicates requested
  int dropped = 0;           // replicates dropped for non-convergence
  std::vector<int> flagged;  // coordinates without a valid se
  std::vector<std::string> notes;
};

// J = minus the central finite difference of the analytic score, symmetrized;
// se = sqrt(diag(J^-1)). Non-invertible J falls back to the pseudo-inverse
// with a note; negative variances are flagged.
template <class Params>
SEReport numerical_information(const Params& params, const Dataset& ds);

// Parametric bootstrap (basic and cov-latent variants): B datasets simulated
// at the fitted values holding covariates fixed, refit warm-started from the
// fit, labels aligned to the reference by best-permutation matching on the
// emission probabilities.
SEReport bootstrap_se(const FitResult<BasicParams>& fit, const Dataset& ds, int B,
                      std::uint64_t seed, const FitConfig& cfg);
SEReport bootstrap_se(const FitResult<CovLatentParams>& fit, const Dataset& ds, int B,
                      std::uint64_t seed, const FitConfig& cfg);

// Delta-method standard errors on the probability scale, shaped like the
// parameter struct (coefficient blocks keep their packed se; the derived
// stationary initial distribution of cov-manifest reports zero).
BasicParams natural_scale_se(const BasicParams& p, const Eigen::MatrixXd& cov);
MixedParams natural_scale_se(const MixedParams& p, const Eigen::MatrixXd& cov);

// ---------------------------------------------------------------------------
// Simulation (datasets come back collapsed, deterministic in the seed)
// ---------------------------------------------------------------------------
Dataset simulate_basic(const BasicParams& p, int n, int T, std::uint64_t seed);
Dataset simulate_cov_latent(const CovLatentParams& p, const Eigen::MatrixXd& X1,
                            const std::vector<Eigen::MatrixXd>& X2, std::uint64_t seed);
Dataset simulate_cov_manifest(const CovManifestParams& p, const Eigen::MatrixXd& X1,
                              const std::vector<Eigen::MatrixXd>& X2, std::uint64_t seed);
Dataset simulate_mixed(const MixedParams& p, int n, int T, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Label alignment
// ---------------------------------------------------------------------------
// Permutation (new index -> old index) minimizing the total variation
// distance between emission columns; k <= 8.
std::vector<int> best_emission_permutation(const std::vector<Eigen::MatrixXd>& reference,
                                           const std::vector<Eigen::MatrixXd>& other);
BasicParams apply_state_permutation(const BasicParams& p, const std::vector<int>& perm);
CovLatentParams apply_state_permutation(const CovLatentParams& p, const std::vector<int>& perm);
MixedParams apply_class_permutation(const MixedParams& p, const std::vector<int>& perm);

// ---------------------------------------------------------------------------
// Model selection
// ---------------------------------------------------------------------------
struct SelectionRow {
  int k = 0;            // basic / covariate variants
  int k1 = 0, k2 = 0;   // mixed
  double loglik = 0.0;
  int np = 0;
  double aic = 0.0, bic = 0.0;
  std::uint64_t seed = 0;
  int best_start = 0;
  bool converged = false;
  bool failed = false;
  std::string error;
};

struct SelectionTable {
  std::vector<SelectionRow> rows;
  int best_aic = -1;  // row indices of the minimizers (failed rows excluded)
  int best_bic = -1;
};

enum class Variant { Basic, CovManifest, CovLatent, Mixed };

// Fits every size in the range (for mixed: the (k1,k2) grid) with one
// deterministic start plus cfg.n_starts random starts when cfg.start is
// Random, keeping the best log-likelihood per size. Failures are recorded and
// the table is still returned.
SelectionTable select_states(const Dataset& ds, Variant variant, int k_min, int k_max,
                             const FitConfig& cfg);
SelectionTable select_states_mixed(const Dataset& ds,
                                   const std::vector<std::pair<int, int>>& grid,
                                   const FitConfig& cfg);

}  // namespace lmpanel
