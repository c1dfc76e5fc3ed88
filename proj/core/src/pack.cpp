#include <cmath>
#include <limits>

#include "lmpanel/errors.hpp"
#include "lmpanel/hmm.hpp"
#include "lmpanel/inference.hpp"
#include "lmpanel/prob.hpp"
#include "logit_newton.hpp"

namespace lmpanel {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kLogitCap = 50.0;

struct Packer {
  std::vector<double> vals;
  std::vector<std::string> names;
  bool clamped = false;

  void raw(double v, const std::string& name) {
    vals.push_back(v);
    names.push_back(name);
  }
  void simplex(const VectorXd& probs, int ref, const std::string& prefix) {
    for (int i = 0; i < probs.size(); ++i) {
      if (i == ref) continue;
      double li, v;
      if (probs(i) <= 0.0 && probs(ref) <= 0.0)
        v = 0.0, clamped = true;
      else if (probs(i) <= 0.0)
        v = -kLogitCap, clamped = true;
      else if (probs(ref) <= 0.0)
        v = kLogitCap, clamped = true;
      else {
        li = std::log(probs(i)) - std::log(probs(ref));
        v = li;
        if (v > kLogitCap) v = kLogitCap, clamped = true;
        if (v < -kLogitCap) v = -kLogitCap, clamped = true;
      }
      raw(v, prefix + "[" + std::to_string(i + 1) + "]");
    }
  }
  PackedParams finish() const {
    PackedParams out;
    out.theta = Eigen::Map<const VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    out.names = names;
    out.clamped = clamped;
    return out;
  }
};

struct Unpacker {
  const VectorXd& theta;
  Eigen::Index pos = 0;

  double raw() { return theta(pos++); }
  VectorXd simplex(int k, int ref) {
    VectorXd eta(k - 1);
    for (int b = 0; b < k - 1; ++b) eta(b) = theta(pos++);
    return multinomial_logit_probs(eta, ref);
  }
  void done() const {
    if (pos != theta.size())
      throw NumericalError("unpack_params: length mismatch (" + std::to_string(pos) + " used of " +
                           std::to_string(theta.size()) + ")");
  }
};

// d/d(logit_i) of sum_j b_j log p_j for a softmax block: b_i - B p_i.
void simplex_score(const VectorXd& counts, const VectorXd& probs, int ref,
                   std::vector<double>& out) {
  double total = counts.sum();
  for (int i = 0; i < probs.size(); ++i) {
    if (i == ref) continue;
    out.push_back(counts(i) - total * probs(i));
  }
}

std::string trans_label(size_t n_trans, size_t m, int ubar) {
  std::string base = n_trans == 1 ? "trans" : "trans[t=" + std::to_string(m + 2) + "]";
  return base + "[" + std::to_string(ubar + 1) + "->]";
}

}  // namespace

// ---------------------------------------------------------------------------
// Basic
// ---------------------------------------------------------------------------

PackedParams pack_params(const BasicParams& p) {
  Packer pk;
  pk.simplex(p.initial, 0, "initial");
  for (size_t m = 0; m < p.transition.size(); ++m)
    for (int ubar = 0; ubar < p.k(); ++ubar)
      pk.simplex(p.transition[m].row(ubar).transpose(), ubar,
                 trans_label(p.transition.size(), m, ubar));
  for (size_t j = 0; j < p.emission.size(); ++j)
    for (int u = 0; u < p.k(); ++u)
      pk.simplex(p.emission[j].col(u), 0,
                 "psi[j=" + std::to_string(j + 1) + "][u=" + std::to_string(u + 1) + "]");
  return pk.finish();
}

void unpack_params(const VectorXd& theta, BasicParams& out) {
  Unpacker up{theta};
  const int k = out.k();
  out.initial = up.simplex(k, 0);
  for (auto& m : out.transition)
    for (int ubar = 0; ubar < k; ++ubar) m.row(ubar) = up.simplex(k, ubar).transpose();
  for (auto& e : out.emission)
    for (int u = 0; u < k; ++u) e.col(u) = up.simplex(static_cast<int>(e.rows()), 0);
  up.done();
}

double observed_loglik(const BasicParams& p, const Dataset& ds) {
  double ll = 0.0;
  HmmInputs h;
  h.init = p.initial;
  h.trans = p.transition;
  for (int i = 0; i < ds.n_config(); ++i) {
    h.emit = emission_table(p.emission, ds.S[i]);
    ll += ds.yv(i) * forward_loglik(h);
  }
  return ll;
}

VectorXd score(const BasicParams& p, const Dataset& ds) {
  BasicCounts counts = estep_basic(ds, p);
  std::vector<double> g;
  simplex_score(counts.init, p.initial, 0, g);
  if (p.homogeneous()) {
    MatrixXd pooled = MatrixXd::Zero(p.k(), p.k());
    for (const auto& m : counts.trans) pooled += m;
    for (int ubar = 0; ubar < p.k(); ++ubar)
      simplex_score(pooled.row(ubar).transpose(), p.transition[0].row(ubar).transpose(), ubar, g);
  } else {
    for (size_t m = 0; m < p.transition.size(); ++m)
      for (int ubar = 0; ubar < p.k(); ++ubar)
        simplex_score(counts.trans[m].row(ubar).transpose(),
                      p.transition[m].row(ubar).transpose(), ubar, g);
  }
  for (size_t j = 0; j < p.emission.size(); ++j)
    for (int u = 0; u < p.k(); ++u)
      simplex_score(counts.resp[j].col(u), p.emission[j].col(u), 0, g);
  return Eigen::Map<VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

// ---------------------------------------------------------------------------
// Covariates in the latent model
// ---------------------------------------------------------------------------

PackedParams pack_params(const CovLatentParams& p) {
  Packer pk;
  const int k = p.k();
  for (int b = 0; b < k - 1; ++b)
    for (int row = 0; row < p.init_coef.rows(); ++row)
      pk.raw(p.init_coef(row, b), "Be[u=" + std::to_string(b + 2) + "][" +
                                      (row == 0 ? "intercept" : "x" + std::to_string(row)) + "]");
  if (p.mode == TransitionParam::Multilogit) {
    for (int ubar = 0; ubar < k; ++ubar) {
      int col = 0;
      for (int u = 0; u < k; ++u) {
        if (u == ubar) continue;
        for (int row = 0; row < p.trans_coef[ubar].rows(); ++row)
          pk.raw(p.trans_coef[ubar](row, col),
                 "Ga[" + std::to_string(ubar + 1) + "->" + std::to_string(u + 1) + "][" +
                     (row == 0 ? "intercept" : "x" + std::to_string(row)) + "]");
        ++col;
      }
    }
  } else {
    for (int ubar = 0; ubar < k; ++ubar)
      for (int u = 0; u < k; ++u)
        if (u != ubar)
          pk.raw(p.diff.intercepts(ubar, u),
                 "Ga0[" + std::to_string(ubar + 1) + "->" + std::to_string(u + 1) + "]");
    for (int a = 1; a < k; ++a)
      for (int m = 0; m < p.diff.slopes.cols(); ++m)
        pk.raw(p.diff.slopes(a, m),
               "Ga1[u=" + std::to_string(a + 1) + "][x" + std::to_string(m + 1) + "]");
  }
  for (size_t j = 0; j < p.emission.size(); ++j)
    for (int u = 0; u < k; ++u)
      pk.simplex(p.emission[j].col(u), 0,
                 "psi[j=" + std::to_string(j + 1) + "][u=" + std::to_string(u + 1) + "]");
  return pk.finish();
}

void unpack_params(const VectorXd& theta, CovLatentParams& out) {
  Unpacker up{theta};
  const int k = out.k();
  for (int b = 0; b < k - 1; ++b)
    for (int row = 0; row < out.init_coef.rows(); ++row) out.init_coef(row, b) = up.raw();
  if (out.mode == TransitionParam::Multilogit) {
    for (int ubar = 0; ubar < k; ++ubar)
      for (int col = 0; col < k - 1; ++col)
        for (int row = 0; row < out.trans_coef[ubar].rows(); ++row)
          out.trans_coef[ubar](row, col) = up.raw();
  } else {
    for (int ubar = 0; ubar < k; ++ubar)
      for (int u = 0; u < k; ++u)
        if (u != ubar) out.diff.intercepts(ubar, u) = up.raw();
    for (int a = 1; a < k; ++a)
      for (int m = 0; m < out.diff.slopes.cols(); ++m) out.diff.slopes(a, m) = up.raw();
  }
  for (auto& e : out.emission)
    for (int u = 0; u < k; ++u) e.col(u) = up.simplex(static_cast<int>(e.rows()), 0);
  up.done();
}

double observed_loglik(const CovLatentParams& p, const Dataset& ds) {
  double ll = 0.0;
  for (int i = 0; i < ds.n_config(); ++i) {
    HmmInputs h;
    h.init = initial_probs(p.init_coef, ds.X1.row(i).transpose());
    for (int t = 0; t < ds.T() - 1; ++t)
      h.trans.push_back(transition_probs(p, ds.X2[i].row(t).transpose()));
    h.emit = emission_table(p.emission, ds.S[i]);
    ll += ds.yv(i) * forward_loglik(h);
  }
  return ll;
}

VectorXd score(const CovLatentParams& p, const Dataset& ds) {
  CovLatentCounts counts = estep_cov_latent(ds, p);
  const int n = ds.n_config();
  const int T = ds.T();
  const int k = p.k();
  std::vector<double> g;

  // Initial-logit coefficients.
  const int d1 = 1 + ds.p1();
  MatrixXd be_grad = MatrixXd::Zero(d1, k - 1);
  for (int i = 0; i < n; ++i) {
    VectorXd x1 = ds.X1.row(i).transpose();
    VectorXd z(d1);
    z(0) = 1.0;
    z.tail(ds.p1()) = x1;
    VectorXd probs = initial_probs(p.init_coef, x1);
    double wtot = counts.w_init.row(i).sum();
    for (int b = 0; b < k - 1; ++b)
      be_grad.col(b) += (counts.w_init(i, b + 1) - wtot * probs(b + 1)) * z;
  }
  for (int b = 0; b < k - 1; ++b)
    for (int row = 0; row < d1; ++row) g.push_back(be_grad(row, b));

  // Transition-logit coefficients.
  if (p.mode == TransitionParam::Multilogit) {
    const int d2 = 1 + ds.p2();
    for (int ubar = 0; ubar < k; ++ubar) {
      MatrixXd ga_grad = MatrixXd::Zero(d2, k - 1);
      for (int i = 0; i < n; ++i) {
        for (int t = 0; t < T - 1; ++t) {
          const MatrixXd& w = counts.w_trans[static_cast<size_t>(i) * (T - 1) + t];
          double wtot = w.row(ubar).sum();
          if (wtot <= 0.0) continue;
          VectorXd x2 = ds.X2[i].row(t).transpose();
          VectorXd z(d2);
          z(0) = 1.0;
          z.tail(ds.p2()) = x2;
          MatrixXd P = transition_probs(p, x2);
          int col = 0;
          for (int u = 0; u < k; ++u) {
            if (u == ubar) continue;
            ga_grad.col(col) += (w(ubar, u) - wtot * P(ubar, u)) * z;
            ++col;
          }
        }
      }
      for (int col = 0; col < k - 1; ++col)
        for (int row = 0; row < d2; ++row) g.push_back(ga_grad(row, col));
    }
  } else {
    std::vector<detail::DifflogitObs> obs(static_cast<size_t>(n) * (T - 1));
    for (int i = 0; i < n; ++i)
      for (int t = 0; t < T - 1; ++t) {
        auto& ob = obs[static_cast<size_t>(i) * (T - 1) + t];
        ob.x = ds.X2[i].row(t).transpose();
        ob.w = counts.w_trans[static_cast<size_t>(i) * (T - 1) + t];
      }
    VectorXd dg = detail::difflogit_gradient(obs, p.diff.intercepts, p.diff.slopes);
    for (int i = 0; i < dg.size(); ++i) g.push_back(dg(i));
  }

  for (size_t j = 0; j < p.emission.size(); ++j)
    for (int u = 0; u < k; ++u)
      simplex_score(counts.resp[j].col(u), p.emission[j].col(u), 0, g);
  return Eigen::Map<VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

// ---------------------------------------------------------------------------
// Covariates in the measurement model
// ---------------------------------------------------------------------------

PackedParams pack_params(const CovManifestParams& p) {
  Packer pk;
  for (int y = 0; y < p.cutpoints.size(); ++y)
    pk.raw(p.cutpoints(y), "mu[" + std::to_string(y + 1) + "]");
  for (int u = 1; u < p.k(); ++u) pk.raw(p.support(u), "al[" + std::to_string(u + 1) + "]");
  for (int m = 0; m < p.regression.size(); ++m)
    pk.raw(p.regression(m), "be[" + std::to_string(m + 1) + "]");
  for (int ubar = 0; ubar < p.k(); ++ubar)
    pk.simplex(p.transition.row(ubar).transpose(), ubar,
               "PI[" + std::to_string(ubar + 1) + "->]");
  return pk.finish();
}

void unpack_params(const VectorXd& theta, CovManifestParams& out) {
  Unpacker up{theta};
  const int k = out.k();
  for (int y = 0; y < out.cutpoints.size(); ++y) out.cutpoints(y) = up.raw();
  out.support(0) = 0.0;
  for (int u = 1; u < k; ++u) out.support(u) = up.raw();
  for (int m = 0; m < out.regression.size(); ++m) out.regression(m) = up.raw();
  for (int ubar = 0; ubar < k; ++ubar)
    out.transition.row(ubar) = up.simplex(k, ubar).transpose();
  out.initial = stationary_distribution(out.transition);
  up.done();
}

double observed_loglik(const CovManifestParams& p, const Dataset& ds) {
  double ll = 0.0;
  const int k = p.k();
  for (int i = 0; i < ds.n_config(); ++i) {
    HmmInputs h;
    h.init = p.initial;
    h.trans.push_back(p.transition);
    h.emit.resize(ds.T(), k);
    for (int t = 0; t < ds.T(); ++t) {
      VectorXd x = manifest_covariates(ds, i, t);
      double base = x.dot(p.regression);
      for (int u = 0; u < k; ++u)
        h.emit(t, u) = global_logit_probs(p.cutpoints, p.support(u) + base)(ds.S[i](t, 0));
    }
    ll += ds.yv(i) * forward_loglik(h);
  }
  return ll;
}

VectorXd score(const CovManifestParams& p, const Dataset& ds) {
  CovManifestCounts counts = estep_cov_manifest(ds, p);
  ManifestObsTable obs = manifest_observation_table(ds);
  const int k = p.k();

  VectorXd meas = measurement_score(obs, counts.w_obs, p.cutpoints, p.support, p.regression);
  std::vector<double> g(meas.data(), meas.data() + meas.size());

  // Transition rows: expected-count gradient plus the chain-rule term through
  // the stationary initial distribution. d(pi)/d(logit) solves the
  // differentiated stationarity system A dpi = [dP' pi; 0].
  MatrixXd a(k + 1, k);
  a.topRows(k) = MatrixXd::Identity(k, k) - p.transition.transpose();
  a.bottomRows(1).setOnes();
  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(a);

  for (int ubar = 0; ubar < k; ++ubar) {
    double row_total = counts.b_trans.row(ubar).sum();
    for (int v = 0; v < k; ++v) {
      if (v == ubar) continue;
      double base = counts.b_trans(ubar, v) - row_total * p.transition(ubar, v);

      // dP(ubar,u)/dlogit(ubar,v) = P(ubar,u) (1{u=v} - P(ubar,v))
      VectorXd rhs = VectorXd::Zero(k + 1);
      for (int u = 0; u < k; ++u) {
        double dP = p.transition(ubar, u) * ((u == v ? 1.0 : 0.0) - p.transition(ubar, v));
        rhs(u) = dP * p.initial(ubar);
      }
      VectorXd dpi = cod.solve(rhs);
      double chain = 0.0;
      for (int u = 0; u < k; ++u)
        if (p.initial(u) > 1e-300) chain += counts.b_init(u) / p.initial(u) * dpi(u);
      g.push_back(base + chain);
    }
  }
  return Eigen::Map<VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

// ---------------------------------------------------------------------------
// Mixed
// ---------------------------------------------------------------------------

PackedParams pack_params(const MixedParams& p) {
  Packer pk;
  pk.simplex(p.class_mass, 0, "la");
  for (int u = 0; u < p.k1(); ++u)
    pk.simplex(p.class_initial.col(u), 0, "Piv[u=" + std::to_string(u + 1) + "]");
  for (int u = 0; u < p.k1(); ++u)
    for (int vbar = 0; vbar < p.k2(); ++vbar)
      pk.simplex(p.class_transition[u].row(vbar).transpose(), vbar,
                 "PI[u=" + std::to_string(u + 1) + "][" + std::to_string(vbar + 1) + "->]");
  for (size_t j = 0; j < p.emission.size(); ++j)
    for (int v = 0; v < p.k2(); ++v)
      pk.simplex(p.emission[j].col(v), 0,
                 "psi[j=" + std::to_string(j + 1) + "][v=" + std::to_string(v + 1) + "]");
  return pk.finish();
}

void unpack_params(const VectorXd& theta, MixedParams& out) {
  Unpacker up{theta};
  const int k1 = out.k1(), k2 = out.k2();
  out.class_mass = up.simplex(k1, 0);
  for (int u = 0; u < k1; ++u) out.class_initial.col(u) = up.simplex(k2, 0);
  for (int u = 0; u < k1; ++u)
    for (int vbar = 0; vbar < k2; ++vbar)
      out.class_transition[u].row(vbar) = up.simplex(k2, vbar).transpose();
  for (auto& e : out.emission)
    for (int v = 0; v < k2; ++v) e.col(v) = up.simplex(static_cast<int>(e.rows()), 0);
  up.done();
}

double observed_loglik(const MixedParams& p, const Dataset& ds) {
  return mixed_manifest_loglik(p, ds);
}

VectorXd score(const MixedParams& p, const Dataset& ds) {
  MixedCounts counts = estep_mixed(ds, p);
  std::vector<double> g;
  simplex_score(counts.c_class, p.class_mass, 0, g);
  for (int u = 0; u < p.k1(); ++u)
    simplex_score(counts.b_init.col(u), p.class_initial.col(u), 0, g);
  for (int u = 0; u < p.k1(); ++u)
    for (int vbar = 0; vbar < p.k2(); ++vbar)
      simplex_score(counts.b_trans[u].row(vbar).transpose(),
                    p.class_transition[u].row(vbar).transpose(), vbar, g);
  for (size_t j = 0; j < p.emission.size(); ++j)
    for (int v = 0; v < p.k2(); ++v)
      simplex_score(counts.resp[j].col(v), p.emission[j].col(v), 0, g);
  return Eigen::Map<VectorXd>(g.data(), static_cast<Eigen::Index>(g.size()));
}

}  // namespace lmpanel
