#include "lmpanel/decode.hpp"

#include <cmath>
#include <limits>

#include "lmpanel/errors.hpp"
#include "lmpanel/prob.hpp"

namespace lmpanel {

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int argmax_smallest(const VectorXd& v) {
  int best = 0;
  for (int i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return best;
}

std::vector<int> viterbi_path(const HmmInputs& h) {
  const int T = h.T(), k = h.k();
  MatrixXd delta(T, k);
  MatrixXi back(T, k);
  for (int u = 0; u < k; ++u)
    delta(0, u) = (h.init(u) > 0.0 && h.emit(0, u) > 0.0)
                      ? std::log(h.init(u)) + std::log(h.emit(0, u))
                      : kNegInf;
  for (int t = 1; t < T; ++t) {
    const MatrixXd& P = h.trans_at(t);
    for (int u = 0; u < k; ++u) {
      double best = kNegInf;
      int arg = 0;
      for (int ubar = 0; ubar < k; ++ubar) {
        double cand = delta(t - 1, ubar) +
                      (P(ubar, u) > 0.0 ? std::log(P(ubar, u)) : kNegInf);
        if (cand > best) {
          best = cand;
          arg = ubar;
        }
      }
      double e = h.emit(t, u) > 0.0 ? std::log(h.emit(t, u)) : kNegInf;
      delta(t, u) = best + e;
      back(t, u) = arg;
    }
  }
  int last = argmax_smallest(delta.row(T - 1).transpose());
  if (delta(T - 1, last) == kNegInf)
    throw NumericalError("global_decode: observation impossible under the model");
  std::vector<int> path(T);
  path[T - 1] = last;
  for (int t = T - 1; t >= 1; --t) path[t - 1] = back(t, path[t]);
  return path;
}

// Assembles per-configuration HmmInputs and fills both decodings.
template <class MakeInputs>
DecodingResult decode_with(const Dataset& ds, MakeInputs make) {
  const int n = ds.n_config();
  const int T = ds.T();
  DecodingResult out;
  out.local.resize(n, T);
  out.global.resize(n, T);
  for (int i = 0; i < n; ++i) {
    HmmInputs h = make(i);
    PosteriorSet post = forward_backward(h);
    if (!std::isfinite(post.loglik))
      throw NumericalError("decode: configuration " + std::to_string(i + 1) +
                           " impossible under the model");
    for (int t = 0; t < T; ++t)
      out.local(i, t) = argmax_smallest(post.gamma.row(t).transpose()) + 1;
    std::vector<int> path = viterbi_path(h);
    for (int t = 0; t < T; ++t) out.global(i, t) = path[t] + 1;
  }
  return out;
}

}  // namespace

MatrixXi local_decode(const std::vector<PosteriorSet>& posteriors) {
  const int n = static_cast<int>(posteriors.size());
  if (n == 0) return MatrixXi();
  const int T = static_cast<int>(posteriors[0].gamma.rows());
  MatrixXi out(n, T);
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < T; ++t)
      out(i, t) = argmax_smallest(posteriors[i].gamma.row(t).transpose()) + 1;
  return out;
}

std::vector<int> global_decode(const HmmInputs& h) { return viterbi_path(h); }

DecodingResult decode(const BasicParams& params, const Dataset& ds) {
  return decode_with(ds, [&](int i) {
    HmmInputs h;
    h.init = params.initial;
    h.trans = params.transition;
    h.emit = emission_table(params.emission, ds.S[i]);
    return h;
  });
}

DecodingResult decode(const CovLatentParams& params, const Dataset& ds) {
  if (ds.X2.empty() && ds.T() > 1)
    throw DataError("decode: covariate-in-latent parameters need transition covariates (X2)");
  if (ds.p1() != params.p1() || ds.p2() != params.p2())
    throw DataError("decode: covariate dimensions do not match the fitted parameters");
  return decode_with(ds, [&](int i) {
    HmmInputs h;
    h.init = initial_probs(params.init_coef, ds.X1.row(i).transpose());
    for (int t = 0; t < ds.T() - 1; ++t)
      h.trans.push_back(transition_probs(params, ds.X2[i].row(t).transpose()));
    h.emit = emission_table(params.emission, ds.S[i]);
    return h;
  });
}

DecodingResult decode(const CovManifestParams& params, const Dataset& ds) {
  if (ds.r() != 1) throw DataError("decode: manifest-covariate parameters need a univariate response");
  if (ds.p1() != params.p() || (ds.T() > 1 && ds.p2() != params.p()))
    throw DataError("decode: covariate dimensions do not match the fitted parameters");
  const int k = params.k();
  return decode_with(ds, [&](int i) {
    HmmInputs h;
    h.init = params.initial;
    h.trans.push_back(params.transition);
    h.emit.resize(ds.T(), k);
    for (int t = 0; t < ds.T(); ++t) {
      VectorXd x = manifest_covariates(ds, i, t);
      for (int u = 0; u < k; ++u)
        h.emit(t, u) = emission_probs_manifest(params, u, x)(ds.S[i](t, 0));
    }
    return h;
  });
}

DecodingResult decode(const MixedParams& params, const Dataset& ds) {
  MatrixXd class_post = mixed_class_posteriors(params, ds);
  return decode_with(ds, [&](int i) {
    int u = argmax_smallest(class_post.row(i).transpose());
    HmmInputs h;
    h.init = params.class_initial.col(u);
    h.trans.push_back(params.class_transition[u]);
    h.emit = emission_table(params.emission, ds.S[i]);
    return h;
  });
}

}  // namespace lmpanel
