#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lmpanel/data.hpp"
#include "lmpanel/fit.hpp"
#include "lmpanel/rng.hpp"

namespace lmpanel {

// Parameters of the covariate-free model: time-homogeneous emissions,
// transitions either one matrix per occasion (size T-1) or a single pooled
// matrix.
struct BasicParams {
  Eigen::VectorXd initial;                  // k
  std::vector<Eigen::MatrixXd> transition;  // T-1 entries, or 1 when pooled
  std::vector<Eigen::MatrixXd> emission;    // r entries, c_j x k

  int k() const { return static_cast<int>(initial.size()); }
  bool homogeneous() const { return transition.size() == 1; }
  const Eigen::MatrixXd& transition_at(int t) const {  // t = 1..T-1
    return transition.size() == 1 ? transition[0] : transition[static_cast<size_t>(t) - 1];
  }
};

// Expected counts accumulated over one E-step (frequencies applied).
struct BasicCounts {
  double loglik = 0.0;
  Eigen::VectorXd init;                  // k
  std::vector<Eigen::MatrixXd> trans;    // T-1 entries, k x k
  std::vector<Eigen::MatrixXd> resp;     // r entries, c_j x k
  void merge(const BasicCounts& o);
};

int np_basic(int k, int T, bool homogeneous, const CategorySpec& cats);

BasicCounts estep_basic(const Dataset& ds, const BasicParams& params, int threads = 1);

// Closed-form ratio updates; expected-count rows that vanish are reset to
// uniform and flagged.
BasicParams mstep_basic(const BasicCounts& counts, bool homogeneous, Diagnostics& diag);

BasicParams deterministic_start_basic(const Dataset& ds, int k, bool homogeneous);
BasicParams random_start_basic(const Dataset& ds, int k, bool homogeneous, RngStream& rng);

// Pooled category frequencies with a state-dependent tilt (state u leans
// toward increasingly high categories); the deterministic emission start
// shared by the engines with categorical emissions.
std::vector<Eigen::MatrixXd> tilted_emission_start(const Dataset& ds, int k);

// Random column simplices for every response variable.
std::vector<Eigen::MatrixXd> random_emission_start(const Dataset& ds, int k, RngStream& rng);

FitResult<BasicParams> fit_basic(const Dataset& ds, const FitConfig& cfg,
                                 const BasicParams* input_start = nullptr);

}  // namespace lmpanel
