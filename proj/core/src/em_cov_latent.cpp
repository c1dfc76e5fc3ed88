#include "lmpanel/em_cov_latent.hpp"

#include <cmath>

#include "lmpanel/em_basic.hpp"
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
constexpr double kInnerGradTol = 1e-10;
constexpr int kInnerMaxIter = 100;

VectorXd with_intercept(const VectorXd& x) {
  VectorXd z(x.size() + 1);
  z(0) = 1.0;
  z.tail(x.size()) = x;
  return z;
}
}  // namespace

VectorXd initial_probs(const MatrixXd& init_coef, const VectorXd& x1) {
  VectorXd z = with_intercept(x1);
  VectorXd eta = (z.transpose() * init_coef).transpose();
  return multinomial_logit_probs(eta, 0);
}

MatrixXd transition_probs_multilogit(const std::vector<MatrixXd>& trans_coef,
                                     const VectorXd& x2) {
  const int k = static_cast<int>(trans_coef.size());
  VectorXd z = with_intercept(x2);
  MatrixXd P(k, k);
  for (int ubar = 0; ubar < k; ++ubar) {
    VectorXd eta = (z.transpose() * trans_coef[ubar]).transpose();
    P.row(ubar) = multinomial_logit_probs(eta, ubar).transpose();
  }
  return P;
}

MatrixXd transition_probs_difflogit(const DifflogitCoef& coef, const VectorXd& x2) {
  const int k = static_cast<int>(coef.intercepts.rows());
  MatrixXd P(k, k);
  for (int ubar = 0; ubar < k; ++ubar) {
    VectorXd logits(k);
    for (int u = 0; u < k; ++u) {
      logits(u) = (u == ubar)
                      ? 0.0
                      : coef.intercepts(ubar, u) +
                            x2.dot(coef.slopes.row(ubar) - coef.slopes.row(u));
    }
    double m = logits.maxCoeff();
    VectorXd pr = (logits.array() - m).exp();
    P.row(ubar) = (pr / pr.sum()).transpose();
  }
  return P;
}

MatrixXd transition_probs(const CovLatentParams& params, const VectorXd& x2) {
  return params.mode == TransitionParam::Multilogit
             ? transition_probs_multilogit(params.trans_coef, x2)
             : transition_probs_difflogit(params.diff, x2);
}

std::vector<MatrixXd> difflogit_to_multilogit(const DifflogitCoef& coef, int k) {
  const int p = static_cast<int>(coef.slopes.cols());
  std::vector<MatrixXd> out;
  for (int ubar = 0; ubar < k; ++ubar) {
    MatrixXd m(1 + p, k - 1);
    int col = 0;
    for (int u = 0; u < k; ++u) {
      if (u == ubar) continue;
      m(0, col) = coef.intercepts(ubar, u);
      m.col(col).tail(p) = (coef.slopes.row(ubar) - coef.slopes.row(u)).transpose();
      ++col;
    }
    out.push_back(std::move(m));
  }
  return out;
}

int np_cov_latent(int k, int p1, int p2, TransitionParam mode, const CategorySpec& cats) {
  int q_ga = mode == TransitionParam::Multilogit ? k * (k - 1) * (1 + p2)
                                                 : k * (k - 1) + (k - 1) * p2;
  return (k - 1) * (1 + p1) + q_ga + k * cats.total_free_categories();
}

CovLatentCounts estep_cov_latent(const Dataset& ds, const CovLatentParams& params,
                                 int threads) {
  const int n = ds.n_config();
  const int T = ds.T();
  const int k = params.k();

  auto posts = detail::parallel_indexed<PosteriorSet>(n, threads, [&](int i) {
    HmmInputs h;
    h.init = initial_probs(params.init_coef, ds.X1.row(i).transpose());
    h.trans.reserve(T - 1);
    for (int t = 0; t < T - 1; ++t)
      h.trans.push_back(transition_probs(params, ds.X2[i].row(t).transpose()));
    h.emit = emission_table(params.emission, ds.S[i]);
    return forward_backward(h);
  });

  CovLatentCounts c;
  c.w_init = MatrixXd::Zero(n, k);
  c.w_trans.assign(static_cast<size_t>(n) * (T - 1), MatrixXd());
  for (int j = 0; j < ds.r(); ++j) c.resp.push_back(MatrixXd::Zero(ds.categories.c[j], k));
  for (int i = 0; i < n; ++i) {
    const PosteriorSet& post = posts[i];
    if (!std::isfinite(post.loglik))
      throw NumericalError("estep_cov_latent: configuration " + std::to_string(i + 1) +
                           " impossible under the current parameters");
    double w = ds.yv(i);
    c.loglik += w * post.loglik;
    c.w_init.row(i) = w * post.gamma.row(0);
    for (int t = 0; t < T - 1; ++t) c.w_trans[static_cast<size_t>(i) * (T - 1) + t] = w * post.xi[t];
    for (int t = 0; t < T; ++t)
      for (int j = 0; j < ds.r(); ++j)
        c.resp[j].row(ds.S[i](t, j)) += w * post.gamma.row(t);
  }
  return c;
}

void mstep_latent_logits(const Dataset& ds, const CovLatentCounts& counts,
                         CovLatentParams& params, Diagnostics& diag) {
  const int n = ds.n_config();
  const int T = ds.T();
  const int k = params.k();

  // Initial-probability coefficients: one weighted multinomial logit.
  MatrixXd z1(n, 1 + ds.p1());
  z1.col(0).setOnes();
  z1.rightCols(ds.p1()) = ds.X1;
  detail::fit_weighted_multilogit(z1, counts.w_init, 0, params.init_coef, kInnerGradTol,
                                  kInnerMaxIter, kCoefCap, diag);

  const int L = n * (T - 1);
  MatrixXd z2(L, 1 + ds.p2());
  for (int i = 0; i < n; ++i)
    for (int t = 0; t < T - 1; ++t) {
      z2(i * (T - 1) + t, 0) = 1.0;
      z2.row(i * (T - 1) + t).tail(ds.p2()) = ds.X2[i].row(t);
    }

  if (params.mode == TransitionParam::Multilogit) {
    // Row-wise independent multinomial logits (diagonal reference).
    MatrixXd w(L, k);
    for (int ubar = 0; ubar < k; ++ubar) {
      for (int l = 0; l < L; ++l) w.row(l) = counts.w_trans[l].row(ubar);
      detail::fit_weighted_multilogit(z2, w, ubar, params.trans_coef[ubar], kInnerGradTol,
                                      kInnerMaxIter, kCoefCap, diag);
    }
  } else {
    std::vector<detail::DifflogitObs> obs(L);
    for (int l = 0; l < L; ++l) {
      obs[l].x = z2.row(l).tail(ds.p2()).transpose();
      obs[l].w = counts.w_trans[l];
    }
    detail::fit_difflogit(obs, params.diff.intercepts, params.diff.slopes, kInnerGradTol,
                          kInnerMaxIter, kCoefCap, diag);
  }
}

CovLatentParams deterministic_start_cov_latent(const Dataset& ds, int k,
                                               TransitionParam mode) {
  CovLatentParams p;
  p.mode = mode;
  p.init_coef = MatrixXd::Zero(1 + ds.p1(), k - 1);  // uniform initial probabilities

  // Intercepts reproducing the 0.8-diagonal start of the basic engine.
  double off = k > 1 ? std::log((0.2 / (k - 1)) / 0.8) : 0.0;
  if (mode == TransitionParam::Multilogit) {
    for (int ubar = 0; ubar < k; ++ubar) {
      MatrixXd m = MatrixXd::Zero(1 + ds.p2(), k - 1);
      m.row(0).setConstant(off);
      p.trans_coef.push_back(std::move(m));
    }
  } else {
    p.diff.intercepts = MatrixXd::Constant(k, k, off);
    p.diff.intercepts.diagonal().setZero();
    p.diff.slopes = MatrixXd::Zero(k, ds.p2());
  }
  p.emission = tilted_emission_start(ds, k);
  return p;
}

CovLatentParams random_start_cov_latent(const Dataset& ds, int k, TransitionParam mode,
                                        RngStream& rng) {
  CovLatentParams p;
  p.mode = mode;
  // Random probabilities mapped back to intercepts; slopes start at zero.
  p.init_coef = MatrixXd::Zero(1 + ds.p1(), k - 1);
  p.init_coef.row(0) = logits_from_probs(random_simplex(k, rng), 0).transpose();

  if (mode == TransitionParam::Multilogit) {
    for (int ubar = 0; ubar < k; ++ubar) {
      MatrixXd m = MatrixXd::Zero(1 + ds.p2(), k - 1);
      m.row(0) = logits_from_probs(random_simplex(k, rng), ubar).transpose();
      p.trans_coef.push_back(std::move(m));
    }
  } else {
    p.diff.intercepts = MatrixXd::Zero(k, k);
    for (int ubar = 0; ubar < k; ++ubar) {
      VectorXd eta = logits_from_probs(random_simplex(k, rng), ubar);
      int col = 0;
      for (int u = 0; u < k; ++u)
        if (u != ubar) p.diff.intercepts(ubar, u) = eta(col++);
    }
    p.diff.slopes = MatrixXd::Zero(k, ds.p2());
  }
  p.emission = random_emission_start(ds, k, rng);
  return p;
}

namespace {

FitResult<CovLatentParams> run_em_cov_latent(const Dataset& ds, const FitConfig& cfg,
                                             CovLatentParams params) {
  FitResult<CovLatentParams> res;
  detail::EmTrace em;

  CovLatentCounts counts = estep_cov_latent(ds, params, cfg.threads);
  em.start(counts.loglik);
  for (int s = 1; s <= cfg.maxit; ++s) {
    if (!cfg.fix_psi) {
      for (size_t j = 0; j < params.emission.size(); ++j) {
        MatrixXd m = counts.resp[j];
        detail::normalize_cols(m, res.diag, "emission");
        params.emission[j] = std::move(m);
      }
    }
    mstep_latent_logits(ds, counts, params, res.diag);
    counts = estep_cov_latent(ds, params, cfg.threads);
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

FitResult<CovLatentParams> fit_cov_latent(const Dataset& ds, const FitConfig& cfg,
                                          const CovLatentParams* input_start) {
  if (ds.n_config() == 0) throw DataError("fit_cov_latent: empty dataset");
  if (cfg.k < 1) throw DataError("fit_cov_latent: k must be >= 1");
  if (ds.X2.empty() && ds.T() > 1)
    throw DataError("fit_cov_latent: dataset lacks transition covariates (X2)");
  auto violations = validate(ds);
  if (!violations.empty())
    throw DataError("fit_cov_latent: invalid dataset: " + violations.front());
  if (cfg.fix_psi && cfg.start != StartRule::Input)
    throw DataError("fit_cov_latent: fix_psi requires start=input with emission values");

  FitResult<CovLatentParams> best;
  if (cfg.start == StartRule::Input) {
    if (!input_start) throw DataError("fit_cov_latent: start=input requires initial parameters");
    if (input_start->mode != cfg.param)
      throw DataError("fit_cov_latent: input parameterization does not match cfg.param");
    best = run_em_cov_latent(ds, cfg, *input_start);
  } else if (cfg.start == StartRule::Deterministic) {
    best = run_em_cov_latent(ds, cfg,
                             deterministic_start_cov_latent(ds, cfg.k, cfg.param));
  } else {
    const int n_starts = cfg.n_starts_effective(cfg.k);
    RngStream root(cfg.seed);
    auto runs = detail::parallel_indexed<FitResult<CovLatentParams>>(
        n_starts, cfg.threads, [&](int s) {
          RngStream rng = root.substream(static_cast<std::uint64_t>(s));
          FitConfig one = cfg;
          one.threads = 1;
          auto r = run_em_cov_latent(ds, one,
                                     random_start_cov_latent(ds, cfg.k, cfg.param, rng));
          r.best_start = s;
          return r;
        });
    best = runs[0];
    for (auto& r : runs)
      if (r.loglik > best.loglik) best = std::move(r);
  }
  best.seed = cfg.seed;
  best.np = np_cov_latent(cfg.k, ds.p1(), ds.p2(), cfg.param, ds.categories);
  best.aic = aic(best.loglik, best.np);
  best.bic = bic(best.loglik, best.np, ds.n_total());
  return best;
}

}  // namespace lmpanel
