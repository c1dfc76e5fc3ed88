#include "lmpanel/prob.hpp"

#include <cmath>

#include "lmpanel/errors.hpp"

namespace lmpanel {

double expit(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

bool is_simplex(const VectorXd& v, double tol) {
  if (v.size() == 0) return false;
  if ((v.array() < 0.0).any()) return false;
  return std::abs(v.sum() - 1.0) <= tol;
}

bool is_row_stochastic(const MatrixXd& m, double tol) {
  if (m.rows() != m.cols() || m.rows() == 0) return false;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!is_simplex(m.row(i).transpose(), tol)) return false;
  }
  return true;
}

VectorXd stationary_distribution(const MatrixXd& transition, double tol) {
  const Eigen::Index k = transition.rows();
  if (transition.cols() != k || k == 0)
    throw NumericalError("stationary_distribution: matrix must be square");

  MatrixXd a(k + 1, k);
  a.topRows(k) = MatrixXd::Identity(k, k) - transition.transpose();
  a.bottomRows(1).setOnes();
  VectorXd b = VectorXd::Zero(k + 1);
  b(k) = 1.0;

  // Complete orthogonal decomposition gives the minimum-norm least-squares
  // solution, which is what the reducible-chain convention requires.
  VectorXd pi = a.completeOrthogonalDecomposition().solve(b);

  // Roundoff can leave ~1e-16 negatives on boundary solutions.
  for (Eigen::Index u = 0; u < k; ++u) {
    if (pi(u) < 0.0 && pi(u) > -1e-12) pi(u) = 0.0;
  }
  double s = pi.sum();
  if (std::abs(s - 1.0) > tol || (pi.array() < 0.0).any())
    throw NumericalError("stationary_distribution: no valid solution within tolerance");
  pi /= s;
  double residual = (pi.transpose() * transition - pi.transpose()).cwiseAbs().maxCoeff();
  if (residual > tol)
    throw NumericalError("stationary_distribution: residual " + std::to_string(residual) +
                         " exceeds tolerance");
  return pi;
}

VectorXd multinomial_logit_probs(const VectorXd& eta, int ref) {
  const int k = static_cast<int>(eta.size()) + 1;
  if (ref < 0 || ref >= k)
    throw NumericalError("multinomial_logit_probs: reference index out of range");
  VectorXd g(k);
  int pos = 0;
  for (int u = 0; u < k; ++u) g(u) = (u == ref) ? 0.0 : eta(pos++);
  double m = g.maxCoeff();
  VectorXd p = (g.array() - m).exp();
  p /= p.sum();
  return p;
}

VectorXd logits_from_probs(const VectorXd& probs, int ref) {
  const int k = static_cast<int>(probs.size());
  if (ref < 0 || ref >= k)
    throw NumericalError("logits_from_probs: reference index out of range");
  if (probs(ref) <= 0.0)
    throw NumericalError("logits_from_probs: reference probability must be positive");
  VectorXd eta(k - 1);
  int pos = 0;
  for (int u = 0; u < k; ++u) {
    if (u == ref) continue;
    eta(pos++) = std::log(probs(u)) - std::log(probs(ref));
  }
  return eta;
}

VectorXd global_logit_probs(const VectorXd& cutpoints, double shift) {
  const int c = static_cast<int>(cutpoints.size()) + 1;
  // survivor[y] = P(Y >= y); survivor[0] = 1, survivor[c] = 0.
  VectorXd survivor(c + 1);
  survivor(0) = 1.0;
  for (int y = 1; y < c; ++y) survivor(y) = expit(cutpoints(y - 1) + shift);
  survivor(c) = 0.0;
  VectorXd probs(c);
  for (int y = 0; y < c; ++y) {
    probs(y) = survivor(y) - survivor(y + 1);
    if (probs(y) < 0.0)
      throw NumericalError("global_logit_probs: non-monotone cut-points give a negative cell");
  }
  return probs;
}

VectorXd random_simplex(int k, RngStream& rng) {
  if (k < 1) throw NumericalError("random_simplex: k must be >= 1");
  VectorXd v(k);
  for (int i = 0; i < k; ++i) v(i) = rng.uniform_pos();
  v /= v.sum();
  return v;
}

MatrixXd random_stochastic_matrix(int k, RngStream& rng) {
  MatrixXd m(k, k);
  for (int i = 0; i < k; ++i) m.row(i) = random_simplex(k, rng).transpose();
  return m;
}

}  // namespace lmpanel
