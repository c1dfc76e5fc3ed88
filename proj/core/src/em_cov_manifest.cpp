#include "lmpanel/em_cov_manifest.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "lmpanel/errors.hpp"
#include "lmpanel/hmm.hpp"
#include "lmpanel/prob.hpp"
#include "em_util.hpp"
#include "logit_newton.hpp"

namespace lmpanel {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr double kCoefCap = 50.0;
constexpr double kInnerGradTol = 1e-9;
constexpr int kInnerMaxIter = 100;

bool strictly_decreasing(const VectorXd& v) {
  for (Eigen::Index i = 1; i < v.size(); ++i)
    if (!(v(i) < v(i - 1))) return false;
  return true;
}

// Gradient and (optionally) Hessian of sum_{l,u} w(l,u) log phi_{y_l | u, x_l}
// in the (mu, al[2..k], be) coordinates. Cells that are not positive are
// skipped (the Newton line search keeps iterates feasible).
void measurement_derivs(const ManifestObsTable& obs, const MatrixXd& w, const VectorXd& mu,
                        const VectorXd& al, const VectorXd& be, VectorXd* grad,
                        MatrixXd* hess) {
  const int c = static_cast<int>(mu.size()) + 1;
  const int k = static_cast<int>(al.size());
  const int p = static_cast<int>(be.size());
  const int L = static_cast<int>(obs.x.size());
  const int dim = (c - 1) + (k - 1) + p;

  grad->setZero(dim);
  if (hess) hess->setZero(dim, dim);
  VectorXd d_lo(dim), d_hi(dim);
  for (int l = 0; l < L; ++l) {
    double base = obs.x[l].dot(be);
    int y = obs.y[l];
    for (int u = 0; u < k; ++u) {
      double wu = w(l, u);
      if (wu <= 0.0) continue;
      double shift = al(u) + base;
      // survivor values S_y = P(Y >= y); cell = S_y - S_{y+1}
      double s_lo = (y > 0) ? expit(mu(y - 1) + shift) : 1.0;
      double s_hi = (y < c - 1) ? expit(mu(y) + shift) : 0.0;
      double cell = s_lo - s_hi;
      if (cell <= 0.0) continue;
      double f1_lo = (y > 0) ? s_lo * (1.0 - s_lo) : 0.0;
      double f1_hi = (y < c - 1) ? s_hi * (1.0 - s_hi) : 0.0;

      // d g / d theta for the two cumulative logits straddling the cell.
      d_lo.setZero();
      d_hi.setZero();
      auto add_shift = [&](VectorXd& v) {
        if (u >= 1) v(c - 1 + u - 1) += 1.0;
        v.tail(p) += obs.x[l];
      };
      if (y > 0) {
        d_lo(y - 1) = 1.0;
        add_shift(d_lo);
      }
      if (y < c - 1) {
        d_hi(y) = 1.0;
        add_shift(d_hi);
      }

      VectorXd dcell = f1_lo * d_lo - f1_hi * d_hi;
      *grad += (wu / cell) * dcell;
      if (hess) {
        double f2_lo = (y > 0) ? f1_lo * (1.0 - 2.0 * s_lo) : 0.0;
        double f2_hi = (y < c - 1) ? f1_hi * (1.0 - 2.0 * s_hi) : 0.0;
        MatrixXd d2cell = f2_lo * (d_lo * d_lo.transpose()) - f2_hi * (d_hi * d_hi.transpose());
        *hess += wu * (d2cell / cell - (dcell * dcell.transpose()) / (cell * cell));
      }
    }
  }
}
}  // namespace

VectorXd measurement_score(const ManifestObsTable& obs, const MatrixXd& w,
                           const VectorXd& cutpoints, const VectorXd& support,
                           const VectorXd& regression) {
  VectorXd grad;
  measurement_derivs(obs, w, cutpoints, support, regression, &grad, nullptr);
  return grad;
}

VectorXd emission_probs_manifest(const CovManifestParams& params, int state,
                                 const VectorXd& x) {
  double shift = params.support(state) + x.dot(params.regression);
  return global_logit_probs(params.cutpoints, shift);
}

int np_cov_manifest(int k, int c, int p) {
  return (c - 1) + (k - 1) + p + k * (k - 1);
}

VectorXd manifest_covariates(const Dataset& ds, int i, int t) {
  if (t == 0) return ds.X1.row(i).transpose();
  return ds.X2[i].row(t - 1).transpose();
}

CovManifestCounts estep_cov_manifest(const Dataset& ds, const CovManifestParams& params,
                                     int threads) {
  const int n = ds.n_config();
  const int T = ds.T();
  const int k = params.k();

  auto posts = detail::parallel_indexed<PosteriorSet>(n, threads, [&](int i) {
    HmmInputs h;
    h.init = params.initial;
    h.trans.push_back(params.transition);
    h.emit.resize(T, k);
    for (int t = 0; t < T; ++t) {
      int y = ds.S[i](t, 0);
      VectorXd x = manifest_covariates(ds, i, t);
      double base = x.dot(params.regression);
      for (int u = 0; u < k; ++u)
        h.emit(t, u) = global_logit_probs(params.cutpoints, params.support(u) + base)(y);
    }
    return forward_backward(h);
  });

  CovManifestCounts c;
  c.b_init = VectorXd::Zero(k);
  c.b_trans = MatrixXd::Zero(k, k);
  c.w_obs = MatrixXd::Zero(n * T, k);
  for (int i = 0; i < n; ++i) {
    const PosteriorSet& post = posts[i];
    if (!std::isfinite(post.loglik))
      throw NumericalError("estep_cov_manifest: configuration " + std::to_string(i + 1) +
                           " impossible under the current parameters");
    double w = ds.yv(i);
    c.loglik += w * post.loglik;
    c.b_init += w * post.gamma.row(0).transpose();
    for (int t = 0; t < T - 1; ++t) c.b_trans += w * post.xi[t];
    for (int t = 0; t < T; ++t) c.w_obs.row(i * T + t) = w * post.gamma.row(t);
  }
  return c;
}

bool mstep_global_logit(const ManifestObsTable& obs, const MatrixXd& w,
                        VectorXd& cutpoints, VectorXd& support, VectorXd& regression,
                        Diagnostics& diag) {
  const int c = static_cast<int>(cutpoints.size()) + 1;
  const int k = static_cast<int>(support.size());
  const int p = static_cast<int>(regression.size());
  const int L = static_cast<int>(obs.x.size());
  const int dim = (c - 1) + (k - 1) + p;

  auto unpack = [&](const VectorXd& theta, VectorXd& mu, VectorXd& al, VectorXd& be) {
    mu = theta.head(c - 1);
    al = VectorXd::Zero(k);
    al.tail(k - 1) = theta.segment(c - 1, k - 1);
    be = theta.tail(p);
  };

  detail::NewtonProblem prob;
  prob.feasible = [&](const VectorXd& theta) {
    return strictly_decreasing(theta.head(c - 1));
  };
  prob.value = [&](const VectorXd& theta) {
    VectorXd mu, al, be;
    unpack(theta, mu, al, be);
    double ll = 0.0;
    for (int l = 0; l < L; ++l) {
      double base = obs.x[l].dot(be);
      int y = obs.y[l];
      for (int u = 0; u < k; ++u) {
        if (w(l, u) <= 0.0) continue;
        double hi = (y < c - 1) ? expit(mu(y) + al(u) + base) : 0.0;
        double lo = (y > 0) ? expit(mu(y - 1) + al(u) + base) : 1.0;
        double cell = lo - hi;
        if (cell <= 0.0) return -std::numeric_limits<double>::infinity();
        ll += w(l, u) * std::log(cell);
      }
    }
    return ll;
  };
  prob.derivs = [&](const VectorXd& theta, VectorXd& grad, MatrixXd& hess) {
    VectorXd mu, al, be;
    unpack(theta, mu, al, be);
    measurement_derivs(obs, w, mu, al, be, &grad, &hess);
  };

  VectorXd theta(dim);
  theta.head(c - 1) = cutpoints;
  theta.segment(c - 1, k - 1) = support.tail(k - 1);
  theta.tail(p) = regression;
  auto st = detail::newton_ascent(prob, theta, kInnerGradTol, kInnerMaxIter, kCoefCap, diag);
  VectorXd mu, al, be;
  unpack(theta, mu, al, be);
  if (!strictly_decreasing(mu))
    throw NumericalError("mstep_global_logit: cut-points left the monotone region");
  cutpoints = mu;
  support = al;
  regression = be;
  return st.converged;
}

ManifestObsTable manifest_observation_table(const Dataset& ds) {
  ManifestObsTable obs;
  const int T = ds.T();
  for (int i = 0; i < ds.n_config(); ++i) {
    for (int t = 0; t < T; ++t) {
      obs.x.push_back(manifest_covariates(ds, i, t));
      obs.y.push_back(ds.S[i](t, 0));
    }
  }
  return obs;
}

namespace {

// Pooled empirical cumulative logits, smoothed.
VectorXd empirical_cutpoints(const Dataset& ds) {
  const int c = ds.categories.c[0];
  VectorXd freq = VectorXd::Constant(c, 0.5);
  for (int i = 0; i < ds.n_config(); ++i)
    for (int t = 0; t < ds.T(); ++t) freq(ds.S[i](t, 0)) += ds.yv(i);
  freq /= freq.sum();
  VectorXd mu(c - 1);
  double survivor = 1.0;
  for (int y = 1; y < c; ++y) {
    survivor -= freq(y - 1);
    mu(y - 1) = std::log(survivor) - std::log(1.0 - survivor);
  }
  return mu;
}

}  // namespace

CovManifestParams deterministic_start_cov_manifest(const Dataset& ds, int k) {
  CovManifestParams p;
  p.cutpoints = empirical_cutpoints(ds);
  double range = k > 1 ? p.cutpoints(0) - p.cutpoints(p.cutpoints.size() - 1) : 0.0;

  // Equispaced support points centered on the cut-point range, re-anchored so
  // that support(0) = 0 with the level absorbed into the cut-points.
  p.support = VectorXd::Zero(k);
  if (k > 1) {
    VectorXd centered(k);
    for (int u = 0; u < k; ++u) centered(u) = range * (u - 0.5 * (k - 1)) / (k - 1);
    p.support = centered.array() - centered(0);
    p.cutpoints.array() += centered(0);
  }
  p.regression = VectorXd::Zero(ds.p1());
  p.transition = MatrixXd::Constant(k, k, k > 1 ? 0.2 / (k - 1) : 0.0);
  p.transition.diagonal().setConstant(k > 1 ? 0.8 : 1.0);
  p.initial = stationary_distribution(p.transition);
  return p;
}

CovManifestParams random_start_cov_manifest(const Dataset& ds, int k, RngStream& rng) {
  CovManifestParams p = deterministic_start_cov_manifest(ds, k);
  double range = std::max(1.0, k > 1 ? p.cutpoints(0) - p.cutpoints(p.cutpoints.size() - 1) : 1.0);
  VectorXd draws(k);
  for (int u = 0; u < k; ++u) draws(u) = 0.5 * range * rng.normal();
  std::sort(draws.data(), draws.data() + k);
  p.support = draws.array() - draws(0);
  return p;
}

namespace {

FitResult<CovManifestParams> run_em_cov_manifest(const Dataset& ds, const FitConfig& cfg,
                                                 CovManifestParams params,
                                                 const ManifestObsTable& obs) {
  FitResult<CovManifestParams> res;
  detail::EmTrace em;

  CovManifestCounts counts = estep_cov_manifest(ds, params, cfg.threads);
  em.start(counts.loglik);
  for (int s = 1; s <= cfg.maxit; ++s) {
    // Conditional M-steps: transition rows from expected counts with the
    // stationary initial distribution recomputed, then the measurement block.
    MatrixXd trans = counts.b_trans;
    detail::normalize_rows(trans, res.diag, "transition");
    params.transition = trans;
    params.initial = stationary_distribution(params.transition);
    mstep_global_logit(obs, counts.w_obs, params.cutpoints, params.support,
                       params.regression, res.diag);

    counts = estep_cov_manifest(ds, params, cfg.threads);
    if (em.step(counts.loglik, cfg.tol, res.diag)) break;
  }
  res.params = std::move(params);
  res.loglik = em.trace.back();
  res.trace = std::move(em.trace);
  res.converged = em.converged;
  res.iterations = em.iterations;
  return res;
}

}  // namespace

FitResult<CovManifestParams> fit_cov_manifest(const Dataset& ds, const FitConfig& cfg,
                                              const CovManifestParams* input_start) {
  if (ds.n_config() == 0) throw DataError("fit_cov_manifest: empty dataset");
  if (cfg.k < 1) throw DataError("fit_cov_manifest: k must be >= 1");
  if (ds.r() != 1)
    throw DataError("fit_cov_manifest: this variant is restricted to a univariate response");
  if (ds.T() > 1 && ds.p1() != ds.p2())
    throw DataError("fit_cov_manifest: occasion-1 and later covariates must match");
  auto violations = validate(ds);
  if (!violations.empty())
    throw DataError("fit_cov_manifest: invalid dataset: " + violations.front());

  ManifestObsTable obs = manifest_observation_table(ds);

  FitResult<CovManifestParams> best;
  if (cfg.start == StartRule::Input) {
    if (!input_start)
      throw DataError("fit_cov_manifest: start=input requires initial parameters");
    best = run_em_cov_manifest(ds, cfg, *input_start, obs);
  } else if (cfg.start == StartRule::Deterministic) {
    best = run_em_cov_manifest(ds, cfg, deterministic_start_cov_manifest(ds, cfg.k), obs);
  } else {
    const int n_starts = cfg.n_starts_effective(cfg.k);
    RngStream root(cfg.seed);
    auto runs = detail::parallel_indexed<FitResult<CovManifestParams>>(
        n_starts, cfg.threads, [&](int s) {
          RngStream rng = root.substream(static_cast<std::uint64_t>(s));
          FitConfig one = cfg;
          one.threads = 1;
          auto r = run_em_cov_manifest(ds, one, random_start_cov_manifest(ds, cfg.k, rng), obs);
          r.best_start = s;
          return r;
        });
    best = runs[0];
    for (auto& r : runs)
      if (r.loglik > best.loglik) best = std::move(r);
  }
  best.seed = cfg.seed;
  best.np = np_cov_manifest(cfg.k, ds.categories.c[0], ds.p1());
  best.aic = aic(best.loglik, best.np);
  best.bic = bic(best.loglik, best.np, ds.n_total());
  return best;
}

}  // namespace lmpanel
