#include "lmpanel/em_basic.hpp"

#include <cmath>

#include "lmpanel/errors.hpp"
#include "lmpanel/hmm.hpp"
#include "lmpanel/prob.hpp"
#include "em_util.hpp"

namespace lmpanel {

using Eigen::MatrixXd;
using Eigen::VectorXd;

void BasicCounts::merge(const BasicCounts& o) {
  loglik += o.loglik;
  init += o.init;
  for (size_t t = 0; t < trans.size(); ++t) trans[t] += o.trans[t];
  for (size_t j = 0; j < resp.size(); ++j) resp[j] += o.resp[j];
}

int np_basic(int k, int T, bool homogeneous, const CategorySpec& cats) {
  int q_trans = homogeneous ? k * (k - 1) : (T - 1) * k * (k - 1);
  return (k - 1) + q_trans + k * cats.total_free_categories();
}

namespace {

BasicCounts zero_counts(int k, int T, const CategorySpec& cats) {
  BasicCounts c;
  c.init = VectorXd::Zero(k);
  c.trans.assign(std::max(T - 1, 0), MatrixXd::Zero(k, k));
  for (int j = 0; j < cats.r; ++j) c.resp.push_back(MatrixXd::Zero(cats.c[j], k));
  return c;
}

using detail::normalize_cols;
using detail::normalize_rows;

}  // namespace

BasicCounts estep_basic(const Dataset& ds, const BasicParams& params, int threads) {
  const int n = ds.n_config();
  const int T = ds.T();
  const int k = params.k();

  auto work = [&](int begin, int end, BasicCounts& acc) {
    HmmInputs h;
    h.init = params.initial;
    h.trans = params.transition;
    for (int i = begin; i < end; ++i) {
      h.emit = emission_table(params.emission, ds.S[i]);
      PosteriorSet post = forward_backward(h);
      if (!std::isfinite(post.loglik))
        throw NumericalError("estep_basic: configuration " + std::to_string(i + 1) +
                             " impossible under the current parameters");
      double w = ds.yv(i);
      acc.loglik += w * post.loglik;
      acc.init += w * post.gamma.row(0).transpose();
      for (int t = 0; t < T - 1; ++t) acc.trans[t] += w * post.xi[t];
      for (int t = 0; t < T; ++t)
        for (int j = 0; j < ds.r(); ++j)
          acc.resp[j].row(ds.S[i](t, j)) += w * post.gamma.row(t);
    }
  };
  return detail::chunked_reduce(n, threads, zero_counts(k, T, ds.categories), work);
}

BasicParams mstep_basic(const BasicCounts& counts, bool homogeneous, Diagnostics& diag) {
  BasicParams p;
  const int k = static_cast<int>(counts.init.size());

  double s = counts.init.sum();
  p.initial = s > 0.0 ? VectorXd(counts.init / s) : VectorXd::Constant(k, 1.0 / k);

  if (homogeneous) {
    MatrixXd pooled = MatrixXd::Zero(k, k);
    for (const auto& m : counts.trans) pooled += m;
    normalize_rows(pooled, diag, "transition");
    p.transition.push_back(pooled);
  } else {
    for (auto m : counts.trans) {
      normalize_rows(m, diag, "transition");
      p.transition.push_back(std::move(m));
    }
  }
  if (p.transition.empty()) p.transition.push_back(MatrixXd::Identity(k, k));  // T = 1

  for (auto m : counts.resp) {
    normalize_cols(m, diag, "emission");
    p.emission.push_back(std::move(m));
  }
  return p;
}

std::vector<MatrixXd> tilted_emission_start(const Dataset& ds, int k) {
  std::vector<MatrixXd> emission;
  const int T = ds.T();
  for (int j = 0; j < ds.r(); ++j) {
    const int c = ds.categories.c[j];
    VectorXd freq = VectorXd::Constant(c, 0.5);
    for (int i = 0; i < ds.n_config(); ++i)
      for (int t = 0; t < T; ++t) freq(ds.S[i](t, j)) += ds.yv(i);
    freq /= freq.sum();
    MatrixXd psi(c, k);
    for (int u = 0; u < k; ++u) {
      double ucen = k > 1 ? (u - 0.5 * (k - 1)) / (k - 1) : 0.0;
      for (int y = 0; y < c; ++y) {
        double ycen = (y - 0.5 * (c - 1)) / (c - 1);
        psi(y, u) = freq(y) * std::exp(4.0 * ucen * ycen);
      }
      psi.col(u) /= psi.col(u).sum();
    }
    emission.push_back(std::move(psi));
  }
  return emission;
}

std::vector<MatrixXd> random_emission_start(const Dataset& ds, int k, RngStream& rng) {
  std::vector<MatrixXd> emission;
  for (int j = 0; j < ds.r(); ++j) {
    const int c = ds.categories.c[j];
    MatrixXd psi(c, k);
    for (int u = 0; u < k; ++u) psi.col(u) = random_simplex(c, rng);
    emission.push_back(std::move(psi));
  }
  return emission;
}

BasicParams deterministic_start_basic(const Dataset& ds, int k, bool homogeneous) {
  BasicParams p;
  const int T = ds.T();
  p.initial = VectorXd::Constant(k, 1.0 / k);

  // 0.8-diagonal transitions; emissions break the state symmetry with a
  // monotone tilt on the pooled frequencies.
  MatrixXd diag08 = MatrixXd::Constant(k, k, k > 1 ? 0.2 / (k - 1) : 0.0);
  diag08.diagonal().setConstant(k > 1 ? 0.8 : 1.0);
  int n_trans = homogeneous ? 1 : std::max(T - 1, 1);
  p.transition.assign(n_trans, diag08);
  p.emission = tilted_emission_start(ds, k);
  return p;
}

BasicParams random_start_basic(const Dataset& ds, int k, bool homogeneous, RngStream& rng) {
  BasicParams p;
  const int T = ds.T();
  p.initial = random_simplex(k, rng);
  int n_trans = homogeneous ? 1 : std::max(T - 1, 1);
  for (int t = 0; t < n_trans; ++t) p.transition.push_back(random_stochastic_matrix(k, rng));
  p.emission = random_emission_start(ds, k, rng);
  return p;
}

namespace {

FitResult<BasicParams> run_em_basic(const Dataset& ds, const FitConfig& cfg,
                                    BasicParams params) {
  FitResult<BasicParams> res;
  detail::EmTrace em;

  BasicCounts counts = estep_basic(ds, params, cfg.threads);
  em.start(counts.loglik);
  for (int s = 1; s <= cfg.maxit; ++s) {
    params = mstep_basic(counts, cfg.homogeneous, res.diag);
    counts = estep_basic(ds, params, cfg.threads);
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

FitResult<BasicParams> fit_basic(const Dataset& ds, const FitConfig& cfg,
                                 const BasicParams* input_start) {
  if (ds.n_config() == 0) throw DataError("fit_basic: empty dataset");
  if (cfg.k < 1) throw DataError("fit_basic: k must be >= 1");
  auto violations = validate(ds);
  if (!violations.empty()) throw DataError("fit_basic: invalid dataset: " + violations.front());

  FitResult<BasicParams> best;
  if (cfg.start == StartRule::Input) {
    if (!input_start) throw DataError("fit_basic: start=input requires initial parameters");
    best = run_em_basic(ds, cfg, *input_start);
  } else if (cfg.start == StartRule::Deterministic) {
    best = run_em_basic(ds, cfg, deterministic_start_basic(ds, cfg.k, cfg.homogeneous));
  } else {
    const int n_starts = cfg.n_starts_effective(cfg.k);
    RngStream root(cfg.seed);
    auto runs = detail::parallel_indexed<FitResult<BasicParams>>(
        n_starts, cfg.threads, [&](int s) {
          RngStream rng = root.substream(static_cast<std::uint64_t>(s));
          FitConfig one = cfg;
          one.threads = 1;
          auto r = run_em_basic(ds, one, random_start_basic(ds, cfg.k, cfg.homogeneous, rng));
          r.best_start = s;
          return r;
        });
    best = runs[0];
    for (auto& r : runs)
      if (r.loglik > best.loglik) best = std::move(r);
  }
  best.seed = cfg.seed;
  best.np = np_basic(cfg.k, ds.T(), cfg.homogeneous, ds.categories);
  best.aic = aic(best.loglik, best.np);
  best.bic = bic(best.loglik, best.np, ds.n_total());
  return best;
}

}  // namespace lmpanel
