#include "lmpanel/hmm.hpp"

#include <cmath>
#include <limits>

#include "lmpanel/errors.hpp"

namespace lmpanel {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double forward_loglik(const HmmInputs& h) {
  const int T = h.T(), k = h.k();
  Eigen::VectorXd alpha = h.init.cwiseProduct(h.emit.row(0).transpose());
  double scale = alpha.sum();
  if (scale <= 0.0) return kNegInf;
  alpha /= scale;
  double loglik = std::log(scale);
  for (int t = 1; t < T; ++t) {
    alpha = (h.trans_at(t).transpose() * alpha).cwiseProduct(h.emit.row(t).transpose());
    scale = alpha.sum();
    if (scale <= 0.0) return kNegInf;
    alpha /= scale;
    loglik += std::log(scale);
  }
  (void)k;
  return loglik;
}

PosteriorSet forward_backward(const HmmInputs& h) {
  const int T = h.T(), k = h.k();
  PosteriorSet out;
  out.gamma = Eigen::MatrixXd::Zero(T, k);
  out.xi.assign(std::max(T - 1, 0), Eigen::MatrixXd::Zero(k, k));

  Eigen::MatrixXd alpha(T, k);  // normalized per occasion
  Eigen::VectorXd scales(T);

  Eigen::VectorXd a = h.init.cwiseProduct(h.emit.row(0).transpose());
  double s = a.sum();
  if (s <= 0.0) {
    out.loglik = kNegInf;
    return out;
  }
  a /= s;
  alpha.row(0) = a.transpose();
  scales(0) = s;
  double loglik = std::log(s);
  for (int t = 1; t < T; ++t) {
    a = (h.trans_at(t).transpose() * a).cwiseProduct(h.emit.row(t).transpose());
    s = a.sum();
    if (s <= 0.0) {
      out.loglik = kNegInf;
      return out;
    }
    a /= s;
    alpha.row(t) = a.transpose();
    scales(t) = s;
    loglik += std::log(s);
  }
  out.loglik = loglik;

  // Backward pass with the forward scale factors, so gamma = alpha .* beta
  // sums to one without renormalization.
  Eigen::VectorXd beta = Eigen::VectorXd::Ones(k);
  out.gamma.row(T - 1) = alpha.row(T - 1);
  for (int t = T - 1; t >= 1; --t) {
    const Eigen::MatrixXd& P = h.trans_at(t);
    Eigen::VectorXd eb = h.emit.row(t).transpose().cwiseProduct(beta);
    // xi[t-1](ubar,u) = alpha(t-1,ubar) P(ubar,u) emit(t,u) beta(t,u) / scale_t
    out.xi[t - 1] = (alpha.row(t - 1).transpose() * eb.transpose()).cwiseProduct(P) / scales(t);
    beta = P * eb / scales(t);
    out.gamma.row(t - 1) = alpha.row(t - 1).cwiseProduct(beta.transpose());
  }
  return out;
}

Eigen::MatrixXd emission_table(const std::vector<Eigen::MatrixXd>& Psi,
                               const Eigen::MatrixXi& responses) {
  const int T = static_cast<int>(responses.rows());
  const int r = static_cast<int>(responses.cols());
  if (static_cast<int>(Psi.size()) != r)
    throw DataError("emission_table: response variable count mismatch");
  const int k = static_cast<int>(Psi[0].cols());
  Eigen::MatrixXd emit = Eigen::MatrixXd::Ones(T, k);
  for (int t = 0; t < T; ++t) {
    for (int j = 0; j < r; ++j) {
      int y = responses(t, j);
      if (y < 0 || y >= Psi[j].rows())
        throw DataError("emission_table: response code out of range");
      emit.row(t) = emit.row(t).cwiseProduct(Psi[j].row(y));
    }
  }
  return emit;
}

}  // namespace lmpanel
