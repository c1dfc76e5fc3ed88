#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lmpanel/data.hpp"
#include "lmpanel/fit.hpp"
#include "lmpanel/rng.hpp"

namespace lmpanel {

// Mixed model: a time-fixed latent class (k1 classes, mass `class_mass`)
// selects the chain parameters of the k2-state latent process; emissions are
// shared across classes and time-homogeneous, as are the transitions.
struct MixedParams {
  Eigen::VectorXd class_mass;                    // k1
  Eigen::MatrixXd class_initial;                 // k2 x k1, column u is a simplex
  std::vector<Eigen::MatrixXd> class_transition; // k1 entries, k2 x k2
  std::vector<Eigen::MatrixXd> emission;         // r entries, c_j x k2

  int k1() const { return static_cast<int>(class_mass.size()); }
  int k2() const { return static_cast<int>(class_initial.rows()); }
};

int np_mixed(int k1, int k2, const CategorySpec& cats);

// Expected counts from one E-step: class occupancy, class-specific initial
// and transition counts, pooled response counts (emissions are shared).
struct MixedCounts {
  double loglik = 0.0;
  Eigen::VectorXd c_class;                // k1
  Eigen::MatrixXd b_init;                 // k2 x k1
  std::vector<Eigen::MatrixXd> b_trans;   // k1 entries, k2 x k2
  std::vector<Eigen::MatrixXd> resp;      // r entries, c_j x k2
};

MixedCounts estep_mixed(const Dataset& ds, const MixedParams& params, int threads = 1);
MixedParams mstep_mixed(const MixedCounts& counts, Diagnostics& diag);

// sum_i yv_i * log sum_u class_mass_u * p(responses_i | class u), the class
// mixing computed in log space.
double mixed_manifest_loglik(const MixedParams& params, const Dataset& ds);

// Per-configuration class posteriors p(U = u | responses).
Eigen::MatrixXd mixed_class_posteriors(const MixedParams& params, const Dataset& ds,
                                       int threads = 1);

MixedParams deterministic_start_mixed(const Dataset& ds, int k1, int k2,
                                      const FitConfig& cfg);
MixedParams random_start_mixed(const Dataset& ds, int k1, int k2, RngStream& rng);

FitResult<MixedParams> fit_mixed(const Dataset& ds, const FitConfig& cfg,
                                 const MixedParams* input_start = nullptr);

}  // namespace lmpanel
