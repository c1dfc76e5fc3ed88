#pragma once

#include <Eigen/Dense>
#include <vector>

#include "lmpanel/data.hpp"
#include "lmpanel/em_basic.hpp"
#include "lmpanel/em_cov_latent.hpp"
#include "lmpanel/em_cov_manifest.hpp"
#include "lmpanel/em_mixed.hpp"
#include "lmpanel/hmm.hpp"

namespace lmpanel {

// Decoded state labels are 1-based; `local` maximizes each occasion's
// posterior, `global` is the jointly most probable path.
struct DecodingResult {
  Eigen::MatrixXi local;   // n_config x T
  Eigen::MatrixXi global;  // n_config x T
};

// Per-occasion posterior argmax, ties toward the smallest state index.
Eigen::MatrixXi local_decode(const std::vector<PosteriorSet>& posteriors);

// Most probable joint path (max-product in log space with backtracking);
// ties break toward the smaller state index at each backtrack step. Returns
// 0-based indices. Throws NumericalError when the observation is impossible.
std::vector<int> global_decode(const HmmInputs& h);

DecodingResult decode(const BasicParams& params, const Dataset& ds);
DecodingResult decode(const CovLatentParams& params, const Dataset& ds);
DecodingResult decode(const CovManifestParams& params, const Dataset& ds);
// Mixed model: the class is fixed at its posterior mode, then the chain is
// decoded within that class.
DecodingResult decode(const MixedParams& params, const Dataset& ds);

}  // namespace lmpanel
