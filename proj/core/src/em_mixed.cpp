#include "lmpanel/em_mixed.hpp"

#include <cmath>
#include <limits>

#include "lmpanel/em_basic.hpp"
#include "lmpanel/errors.hpp"
#include "lmpanel/hmm.hpp"
#include "lmpanel/prob.hpp"
#include "em_util.hpp"

namespace lmpanel {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_sum_exp(const VectorXd& v) {
  double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

// Forward-backward for every class of one configuration plus the class
// posterior weights.
struct ConfigMixedPost {
  VectorXd class_log_prob;  // k1, log p(responses | class u)
  VectorXd class_post;      // k1
  std::vector<PosteriorSet> within;  // k1 entries
  double total = 0.0;       // log p(responses)
};

ConfigMixedPost config_posteriors(const MixedParams& params, const Eigen::MatrixXi& resp) {
  const int k1 = params.k1();
  ConfigMixedPost out;
  out.class_log_prob.resize(k1);
  out.within.resize(k1);
  MatrixXd emit = emission_table(params.emission, resp);
  for (int u = 0; u < k1; ++u) {
    HmmInputs h;
    h.init = params.class_initial.col(u);
    h.trans.push_back(params.class_transition[u]);
    h.emit = emit;
    out.within[u] = forward_backward(h);
    out.class_log_prob(u) = out.within[u].loglik;
  }
  VectorXd lw(k1);
  for (int u = 0; u < k1; ++u) {
    lw(u) = params.class_mass(u) > 0.0
                ? std::log(params.class_mass(u)) + out.class_log_prob(u)
                : kNegInf;
  }
  out.total = log_sum_exp(lw);
  out.class_post = VectorXd::Zero(k1);
  if (std::isfinite(out.total))
    for (int u = 0; u < k1; ++u)
      out.class_post(u) = std::isfinite(lw(u)) ? std::exp(lw(u) - out.total) : 0.0;
  return out;
}

}  // namespace

MixedCounts estep_mixed(const Dataset& ds, const MixedParams& params, int threads) {
  const int n = ds.n_config();
  const int T = ds.T();
  const int k1 = params.k1(), k2 = params.k2();

  auto posts = detail::parallel_indexed<ConfigMixedPost>(
      n, threads, [&](int i) { return config_posteriors(params, ds.S[i]); });

  MixedCounts c;
  c.c_class = VectorXd::Zero(k1);
  c.b_init = MatrixXd::Zero(k2, k1);
  c.b_trans.assign(k1, MatrixXd::Zero(k2, k2));
  for (int j = 0; j < ds.r(); ++j) c.resp.push_back(MatrixXd::Zero(ds.categories.c[j], k2));

  for (int i = 0; i < n; ++i) {
    const auto& post = posts[i];
    if (!std::isfinite(post.total))
      throw NumericalError("estep_mixed: configuration " + std::to_string(i + 1) +
                           " impossible under the current parameters");
    double w = ds.yv(i);
    c.loglik += w * post.total;
    for (int u = 0; u < k1; ++u) {
      double wu = w * post.class_post(u);
      if (wu == 0.0) continue;
      c.c_class(u) += wu;
      c.b_init.col(u) += wu * post.within[u].gamma.row(0).transpose();
      for (int t = 0; t < T - 1; ++t) c.b_trans[u] += wu * post.within[u].xi[t];
      for (int t = 0; t < T; ++t)
        for (int j = 0; j < ds.r(); ++j)
          c.resp[j].row(ds.S[i](t, j)) += wu * post.within[u].gamma.row(t);
    }
  }
  return c;
}

MixedParams mstep_mixed(const MixedCounts& counts, Diagnostics& diag) {
  MixedParams p;
  const int k1 = static_cast<int>(counts.c_class.size());
  const int k2 = static_cast<int>(counts.b_init.rows());

  double tot = counts.c_class.sum();
  p.class_mass = tot > 0.0 ? VectorXd(counts.c_class / tot) : VectorXd::Constant(k1, 1.0 / k1);

  p.class_initial.resize(k2, k1);
  for (int u = 0; u < k1; ++u) {
    double s = counts.b_init.col(u).sum();
    if (s <= 0.0) {
      p.class_initial.col(u).setConstant(1.0 / k2);
      ++diag.zero_count_resets;
      diag.warn("mixed: empty latent class " + std::to_string(u + 1) + " retained");
    } else {
      p.class_initial.col(u) = counts.b_init.col(u) / s;
    }
  }
  for (int u = 0; u < k1; ++u) {
    MatrixXd m = counts.b_trans[u];
    detail::normalize_rows(m, diag, "class transition");
    p.class_transition.push_back(std::move(m));
  }
  for (auto m : counts.resp) {
    detail::normalize_cols(m, diag, "emission");
    p.emission.push_back(std::move(m));
  }
  return p;
}

int np_mixed(int k1, int k2, const CategorySpec& cats) {
  return (k1 - 1) + k1 * (k2 - 1) + k1 * k2 * (k2 - 1) + k2 * cats.total_free_categories();
}

double mixed_manifest_loglik(const MixedParams& params, const Dataset& ds) {
  double ll = 0.0;
  for (int i = 0; i < ds.n_config(); ++i) {
    auto post = config_posteriors(params, ds.S[i]);
    ll += ds.yv(i) * post.total;
  }
  return ll;
}

MatrixXd mixed_class_posteriors(const MixedParams& params, const Dataset& ds, int threads) {
  const int n = ds.n_config();
  auto posts = detail::parallel_indexed<ConfigMixedPost>(
      n, threads, [&](int i) { return config_posteriors(params, ds.S[i]); });
  MatrixXd out(n, params.k1());
  for (int i = 0; i < n; ++i) out.row(i) = posts[i].class_post.transpose();
  return out;
}

MixedParams deterministic_start_mixed(const Dataset& ds, int k1, int k2,
                                      const FitConfig& cfg) {
  MixedParams p;
  if (k1 == 1) {
    // Single class: exactly the basic deterministic start, so the two engines
    // walk the same EM path.
    BasicParams basic = deterministic_start_basic(ds, k2, /*homogeneous=*/true);
    p.class_mass = VectorXd::Ones(1);
    p.class_initial = basic.initial;
    p.class_transition.push_back(basic.transition[0]);
    p.emission = basic.emission;
    return p;
  }

  // Split a homogeneous basic fit into classes by diagonal perturbations.
  FitConfig base_cfg = cfg;
  base_cfg.k = k2;
  base_cfg.homogeneous = true;
  base_cfg.start = StartRule::Deterministic;
  FitResult<BasicParams> basic = fit_basic(ds, base_cfg);

  p.class_mass = VectorXd::Constant(k1, 1.0 / k1);
  p.class_initial.resize(k2, k1);
  for (int u = 0; u < k1; ++u) {
    VectorXd col = basic.params.initial.array() + 0.01;
    col(u % k2) += 0.5;
    p.class_initial.col(u) = col / col.sum();
  }
  for (int u = 0; u < k1; ++u) {
    MatrixXd m = basic.params.transition[0];
    m.diagonal().array() += 0.2 * (u + 1) / k1;
    for (int v = 0; v < k2; ++v) m.row(v) /= m.row(v).sum();
    p.class_transition.push_back(std::move(m));
  }
  p.emission = basic.params.emission;
  return p;
}

MixedParams random_start_mixed(const Dataset& ds, int k1, int k2, RngStream& rng) {
  MixedParams p;
  p.class_mass = random_simplex(k1, rng);
  p.class_initial.resize(k2, k1);
  for (int u = 0; u < k1; ++u) p.class_initial.col(u) = random_simplex(k2, rng);
  for (int u = 0; u < k1; ++u) p.class_transition.push_back(random_stochastic_matrix(k2, rng));
  p.emission = random_emission_start(ds, k2, rng);
  return p;
}

namespace {

FitResult<MixedParams> run_em_mixed(const Dataset& ds, const FitConfig& cfg,
                                    MixedParams params) {
  FitResult<MixedParams> res;
  detail::EmTrace em;

  MixedCounts counts = estep_mixed(ds, params, cfg.threads);
  em.start(counts.loglik);
  for (int s = 1; s <= cfg.maxit; ++s) {
    params = mstep_mixed(counts, res.diag);
    counts = estep_mixed(ds, params, cfg.threads);
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

FitResult<MixedParams> fit_mixed(const Dataset& ds, const FitConfig& cfg,
                                 const MixedParams* input_start) {
  if (ds.n_config() == 0) throw DataError("fit_mixed: empty dataset");
  if (cfg.k1 < 1 || cfg.k2 < 1) throw DataError("fit_mixed: k1 and k2 must be >= 1");
  auto violations = validate(ds);
  if (!violations.empty()) throw DataError("fit_mixed: invalid dataset: " + violations.front());

  FitResult<MixedParams> best;
  if (cfg.start == StartRule::Input) {
    if (!input_start) throw DataError("fit_mixed: start=input requires initial parameters");
    best = run_em_mixed(ds, cfg, *input_start);
  } else if (cfg.start == StartRule::Deterministic) {
    best = run_em_mixed(ds, cfg, deterministic_start_mixed(ds, cfg.k1, cfg.k2, cfg));
  } else {
    const int n_starts = cfg.n_starts_effective(cfg.k1 * cfg.k2);
    RngStream root(cfg.seed);
    auto runs = detail::parallel_indexed<FitResult<MixedParams>>(
        n_starts, cfg.threads, [&](int s) {
          RngStream rng = root.substream(static_cast<std::uint64_t>(s));
          FitConfig one = cfg;
          one.threads = 1;
          auto r = run_em_mixed(ds, one, random_start_mixed(ds, cfg.k1, cfg.k2, rng));
          r.best_start = s;
          return r;
        });
    best = runs[0];
    for (auto& r : runs)
      if (r.loglik > best.loglik) best = std::move(r);
  }
  best.seed = cfg.seed;
  best.np = np_mixed(cfg.k1, cfg.k2, ds.categories);
  best.aic = aic(best.loglik, best.np);
  best.bic = bic(best.loglik, best.np, ds.n_total());
  return best;
}

}  // namespace lmpanel
