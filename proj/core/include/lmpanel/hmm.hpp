#pragma once

#include <Eigen/Dense>
#include <vector>

namespace lmpanel {

// Hidden-chain inputs for one response configuration. `trans` holds either
// one matrix per transition (size T-1) or a single matrix reused for every
// occasion. `emit(t,u)` is the joint probability of the observed responses at
// occasion t given state u (the local-independence product over variables).
struct HmmInputs {
  Eigen::VectorXd init;
  std::vector<Eigen::MatrixXd> trans;
  Eigen::MatrixXd emit;  // T x k

  int k() const { return static_cast<int>(init.size()); }
  int T() const { return static_cast<int>(emit.rows()); }
  const Eigen::MatrixXd& trans_at(int t) const {  // t = 1..T-1 (into occasion t+1)
    return trans.size() == 1 ? trans[0] : trans[static_cast<size_t>(t) - 1];
  }
};

// Smoothing output: gamma(t,u) = p(state_t = u | data), and
// xi[t-1](ubar,u) = p(state_{t-1} = ubar, state_t = u | data).
struct PosteriorSet {
  double loglik = 0.0;
  Eigen::MatrixXd gamma;                // T x k
  std::vector<Eigen::MatrixXd> xi;      // T-1 entries, k x k
};

// log p(observations) via the scaled forward recursion. An occasion whose
// emission row is identically zero makes the observation impossible under the
// model; the result is then -infinity.
double forward_loglik(const HmmInputs& h);

// Scaled forward-backward pass. If the observation is impossible the returned
// loglik is -infinity and gamma/xi are zero.
PosteriorSet forward_backward(const HmmInputs& h);

// emission(t,u) = prod_j Psi[j](responses(t,j), u) for categorical emissions
// Psi[j] of shape c_j x k.
Eigen::MatrixXd emission_table(const std::vector<Eigen::MatrixXd>& Psi,
                               const Eigen::MatrixXi& responses);

}  // namespace lmpanel
