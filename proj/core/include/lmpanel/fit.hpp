#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace lmpanel {

enum class StartRule { Deterministic, Random, Input };
enum class TransitionParam { Multilogit, Difflogit };

struct FitConfig {
  int k = 2;            // latent states (basic / covariate variants)
  int k1 = 1, k2 = 2;   // latent classes / states (mixed variant)
  double tol = 1e-8;    // relative log-likelihood increment
  int maxit = 1000;
  StartRule start = StartRule::Deterministic;
  int n_starts = 0;     // random starts when start==Random; 0 means 2+k
  std::uint64_t seed = 0;
  TransitionParam param = TransitionParam::Multilogit;  // cov-latent transitions
  bool homogeneous = false;  // basic model: pool transitions over occasions
  bool fix_psi = false;      // cov-latent: keep input emissions fixed
  int threads = 1;

  int n_starts_effective(int k_for_default) const {
    return n_starts > 0 ? n_starts : 2 + k_for_default;
  }
};

struct Diagnostics {
  std::vector<std::string> warnings;
  int zero_count_resets = 0;       // expected-count rows reset to uniform
  int newton_nonconverged = 0;     // inner M-step solves stopped at iteration cap
  int coef_cap_hits = 0;           // coefficients clipped at +-50
  // (iteration, relative decrease) pairs where the loglik trace dipped
  std::vector<std::pair<int, double>> monotonicity_violations;

  void warn(std::string msg) { warnings.push_back(std::move(msg)); }
  void merge(const Diagnostics& o) {
    warnings.insert(warnings.end(), o.warnings.begin(), o.warnings.end());
    zero_count_resets += o.zero_count_resets;
    newton_nonconverged += o.newton_nonconverged;
    coef_cap_hits += o.coef_cap_hits;
    monotonicity_violations.insert(monotonicity_violations.end(),
                                   o.monotonicity_violations.begin(),
                                   o.monotonicity_violations.end());
  }
};

template <class Params>
struct FitResult {
  Params params;
  double loglik = -std::numeric_limits<double>::infinity();
  int np = 0;
  double aic = 0.0, bic = 0.0;
  std::vector<double> trace;  // loglik per EM iteration (first entry: start values)
  bool converged = false;
  int iterations = 0;
  std::uint64_t seed = 0;
  int best_start = 0;  // index of the winning start (0 for deterministic/input)
  Diagnostics diag;
};

inline double aic(double loglik, int np) { return -2.0 * loglik + 2.0 * np; }
inline double bic(double loglik, int np, double n) {
  return -2.0 * loglik + std::log(n) * np;
}

}  // namespace lmpanel
