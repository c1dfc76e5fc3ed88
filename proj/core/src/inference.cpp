#include "lmpanel/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "lmpanel/errors.hpp"
#include "lmpanel/prob.hpp"
#include "em_util.hpp"

namespace lmpanel {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

// ---------------------------------------------------------------------------
// Numerical information
// ---------------------------------------------------------------------------

template <class Params>
SEReport numerical_information(const Params& params, const Dataset& ds) {
  PackedParams packed = pack_params(params);
  const int d = static_cast<int>(packed.theta.size());
  SEReport rep;
  rep.method = "numerical";
  rep.names = packed.names;
  if (packed.clamped)
    rep.notes.push_back("boundary parameters clamped to +-50 logits before differencing");

  MatrixXd info(d, d);
  Params work = params;
  for (int m = 0; m < d; ++m) {
    double h = std::max(1e-5, 1e-5 * std::abs(packed.theta(m)));
    VectorXd tp = packed.theta;
    tp(m) += h;
    unpack_params(tp, work);
    VectorXd sp = score(work, ds);
    VectorXd tm = packed.theta;
    tm(m) -= h;
    unpack_params(tm, work);
    VectorXd sm = score(work, ds);
    info.col(m) = -(sp - sm) / (2.0 * h);
  }
  info = 0.5 * (info + info.transpose()).eval();
  rep.info = info;

  MatrixXd cov;
  Eigen::FullPivLU<MatrixXd> lu(info);
  if (lu.isInvertible()) {
    cov = lu.inverse();
  } else {
    Eigen::JacobiSVD<MatrixXd> svd(info, Eigen::ComputeThinU | Eigen::ComputeThinV);
    double tol = 1e-12 * svd.singularValues().maxCoeff() * d;
    VectorXd inv_sv = svd.singularValues();
    for (int i = 0; i < inv_sv.size(); ++i)
      inv_sv(i) = inv_sv(i) > tol ? 1.0 / inv_sv(i) : 0.0;
    cov = svd.matrixV() * inv_sv.asDiagonal() * svd.matrixU().transpose();
    rep.notes.push_back("information matrix singular; pseudo-inverse used");
  }

  rep.se.resize(d);
  for (int m = 0; m < d; ++m) {
    double v = cov(m, m);
    if (v >= 0.0) {
      rep.se(m) = std::sqrt(v);
    } else {
      rep.se(m) = kNaN;
      rep.flagged.push_back(m);
    }
  }
  if (!rep.flagged.empty())
    rep.notes.push_back("negative variance on " + std::to_string(rep.flagged.size()) +
                        " coordinate(s); reported without se");
  return rep;
}

template SEReport numerical_information<BasicParams>(const BasicParams&, const Dataset&);
template SEReport numerical_information<CovLatentParams>(const CovLatentParams&, const Dataset&);
template SEReport numerical_information<CovManifestParams>(const CovManifestParams&, const Dataset&);
template SEReport numerical_information<MixedParams>(const MixedParams&, const Dataset&);

// ---------------------------------------------------------------------------
// Label alignment
// ---------------------------------------------------------------------------

std::vector<int> best_emission_permutation(const std::vector<MatrixXd>& reference,
                                           const std::vector<MatrixXd>& other) {
  const int k = static_cast<int>(reference.at(0).cols());
  if (k > 8) throw NumericalError("best_emission_permutation: k > 8 not supported");
  std::vector<int> perm(k), best(k);
  std::iota(perm.begin(), perm.end(), 0);
  best = perm;
  double best_cost = std::numeric_limits<double>::infinity();
  do {
    double cost = 0.0;
    for (size_t j = 0; j < reference.size(); ++j)
      for (int v = 0; v < k; ++v)
        cost += 0.5 * (other[j].col(perm[v]) - reference[j].col(v)).cwiseAbs().sum();
    if (cost < best_cost) {
      best_cost = cost;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

BasicParams apply_state_permutation(const BasicParams& p, const std::vector<int>& perm) {
  BasicParams out = p;
  const int k = p.k();
  for (int v = 0; v < k; ++v) out.initial(v) = p.initial(perm[v]);
  for (size_t m = 0; m < p.transition.size(); ++m)
    for (int vbar = 0; vbar < k; ++vbar)
      for (int v = 0; v < k; ++v)
        out.transition[m](vbar, v) = p.transition[m](perm[vbar], perm[v]);
  for (size_t j = 0; j < p.emission.size(); ++j)
    for (int v = 0; v < k; ++v) out.emission[j].col(v) = p.emission[j].col(perm[v]);
  return out;
}

CovLatentParams apply_state_permutation(const CovLatentParams& p, const std::vector<int>& perm) {
  CovLatentParams out = p;
  const int k = p.k();
  // Initial logits: eta'_v = eta_{perm[v]} - eta_{perm[1]} with eta_1 = 0.
  auto init_col = [&](int u) {
    return u == 0 ? VectorXd(VectorXd::Zero(p.init_coef.rows()))
                  : VectorXd(p.init_coef.col(u - 1));
  };
  for (int v = 1; v < k; ++v)
    out.init_coef.col(v - 1) = init_col(perm[v]) - init_col(perm[0]);

  if (p.mode == TransitionParam::Multilogit) {
    // Row vbar of the new set reads row perm[vbar] of the old one; the
    // diagonal reference moves with the row.
    auto old_col_index = [&](int row, int target) {
      return target < row ? target : target - 1;
    };
    for (int vbar = 0; vbar < k; ++vbar) {
      int col = 0;
      for (int v = 0; v < k; ++v) {
        if (v == vbar) continue;
        out.trans_coef[vbar].col(col) =
            p.trans_coef[perm[vbar]].col(old_col_index(perm[vbar], perm[v]));
        ++col;
      }
    }
  } else {
    for (int vbar = 0; vbar < k; ++vbar)
      for (int v = 0; v < k; ++v)
        if (v != vbar) out.diff.intercepts(vbar, v) = p.diff.intercepts(perm[vbar], perm[v]);
    for (int v = 0; v < k; ++v)
      out.diff.slopes.row(v) = p.diff.slopes.row(perm[v]) - p.diff.slopes.row(perm[0]);
  }
  for (size_t j = 0; j < p.emission.size(); ++j)
    for (int v = 0; v < k; ++v) out.emission[j].col(v) = p.emission[j].col(perm[v]);
  return out;
}

MixedParams apply_class_permutation(const MixedParams& p, const std::vector<int>& perm) {
  MixedParams out = p;
  for (int u = 0; u < p.k1(); ++u) {
    out.class_mass(u) = p.class_mass(perm[u]);
    out.class_initial.col(u) = p.class_initial.col(perm[u]);
    out.class_transition[u] = p.class_transition[perm[u]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

namespace {

Eigen::MatrixXi simulate_responses(const std::vector<MatrixXd>& emission,
                                   const std::vector<int>& path, RngStream& rng) {
  const int T = static_cast<int>(path.size());
  const int r = static_cast<int>(emission.size());
  Eigen::MatrixXi s(T, r);
  for (int t = 0; t < T; ++t)
    for (int j = 0; j < r; ++j)
      s(t, j) = rng.categorical(emission[j].col(path[t]).data(),
                                static_cast<int>(emission[j].rows()));
  return s;
}

CategorySpec categories_from_emission(const std::vector<MatrixXd>& emission) {
  CategorySpec cats;
  cats.r = static_cast<int>(emission.size());
  for (const auto& e : emission) cats.c.push_back(static_cast<int>(e.rows()));
  return cats;
}

int draw_from(const VectorXd& probs, RngStream& rng) {
  return rng.categorical(probs.data(), static_cast<int>(probs.size()));
}

}  // namespace

Dataset simulate_basic(const BasicParams& p, int n, int T, std::uint64_t seed) {
  RngStream rng(seed);
  Dataset units;
  units.categories = categories_from_emission(p.emission);
  units.X1.resize(n, 0);
  units.X2.assign(n, MatrixXd(T - 1, 0));
  for (int i = 0; i < n; ++i) {
    std::vector<int> path(T);
    path[0] = draw_from(p.initial, rng);
    for (int t = 1; t < T; ++t) {
      VectorXd row = p.transition_at(t).row(path[t - 1]).transpose();
      path[t] = draw_from(row, rng);
    }
    units.S.push_back(simulate_responses(p.emission, path, rng));
  }
  units.yv = VectorXd::Ones(n);
  return collapse(units);
}

Dataset simulate_cov_latent(const CovLatentParams& p, const MatrixXd& X1,
                            const std::vector<MatrixXd>& X2, std::uint64_t seed) {
  RngStream rng(seed);
  const int n = static_cast<int>(X1.rows());
  if (static_cast<int>(X2.size()) != n)
    throw DataError("simulate_cov_latent: X1 and X2 unit counts differ");
  const int T = n > 0 ? static_cast<int>(X2[0].rows()) + 1 : 0;
  Dataset units;
  units.categories = categories_from_emission(p.emission);
  units.X1 = X1;
  units.X2 = X2;
  for (int i = 0; i < n; ++i) {
    std::vector<int> path(T);
    path[0] = draw_from(initial_probs(p.init_coef, X1.row(i).transpose()), rng);
    for (int t = 1; t < T; ++t) {
      MatrixXd P = transition_probs(p, X2[i].row(t - 1).transpose());
      VectorXd row = P.row(path[t - 1]).transpose();
      path[t] = draw_from(row, rng);
    }
    units.S.push_back(simulate_responses(p.emission, path, rng));
  }
  units.yv = VectorXd::Ones(n);
  return collapse(units);
}

Dataset simulate_cov_manifest(const CovManifestParams& p, const MatrixXd& X1,
                              const std::vector<MatrixXd>& X2, std::uint64_t seed) {
  RngStream rng(seed);
  const int n = static_cast<int>(X1.rows());
  if (static_cast<int>(X2.size()) != n)
    throw DataError("simulate_cov_manifest: X1 and X2 unit counts differ");
  const int T = n > 0 ? static_cast<int>(X2[0].rows()) + 1 : 0;
  Dataset units;
  units.categories.r = 1;
  units.categories.c = {p.c()};
  units.X1 = X1;
  units.X2 = X2;
  for (int i = 0; i < n; ++i) {
    std::vector<int> path(T);
    path[0] = draw_from(p.initial, rng);
    for (int t = 1; t < T; ++t) {
      VectorXd row = p.transition.row(path[t - 1]).transpose();
      path[t] = draw_from(row, rng);
    }
    Eigen::MatrixXi s(T, 1);
    for (int t = 0; t < T; ++t) {
      VectorXd x = t == 0 ? VectorXd(X1.row(i).transpose())
                          : VectorXd(X2[i].row(t - 1).transpose());
      s(t, 0) = draw_from(emission_probs_manifest(p, path[t], x), rng);
    }
    units.S.push_back(s);
  }
  units.yv = VectorXd::Ones(n);
  return collapse(units);
}

Dataset simulate_mixed(const MixedParams& p, int n, int T, std::uint64_t seed) {
  RngStream rng(seed);
  Dataset units;
  units.categories = categories_from_emission(p.emission);
  units.X1.resize(n, 0);
  units.X2.assign(n, MatrixXd(T - 1, 0));
  for (int i = 0; i < n; ++i) {
    int cls = draw_from(p.class_mass, rng);
    std::vector<int> path(T);
    path[0] = draw_from(p.class_initial.col(cls), rng);
    for (int t = 1; t < T; ++t) {
      VectorXd row = p.class_transition[cls].row(path[t - 1]).transpose();
      path[t] = draw_from(row, rng);
    }
    units.S.push_back(simulate_responses(p.emission, path, rng));
  }
  units.yv = VectorXd::Ones(n);
  return collapse(units);
}

// ---------------------------------------------------------------------------
// Parametric bootstrap
// ---------------------------------------------------------------------------

namespace {

template <class Params, class SimulateFn, class RefitFn>
SEReport bootstrap_common(const Params& fitted, int B, std::uint64_t seed, int threads,
                          SimulateFn simulate_one, RefitFn refit) {
  if (B <= 0) throw DataError("bootstrap_se: B must be positive");
  PackedParams ref = pack_params(fitted);
  RngStream root(seed);

  struct Rep {
    bool ok = false;
    VectorXd theta;
  };
  auto reps = detail::parallel_indexed<Rep>(B, threads, [&](int b) {
    Rep rep;
    std::uint64_t sub = root.substream(static_cast<std::uint64_t>(b)).seed();
    Dataset sim = simulate_one(sub);
    FitResult<Params> refit_res = refit(sim);
    if (!refit_res.converged) return rep;
    std::vector<int> perm =
        best_emission_permutation(fitted.emission, refit_res.params.emission);
    Params aligned = apply_state_permutation(refit_res.params, perm);
    rep.theta = pack_params(aligned).theta;
    rep.ok = true;
    return rep;
  });

  SEReport out;
  out.method = "bootstrap";
  out.B = B;
  out.names = ref.names;
  const int d = static_cast<int>(ref.theta.size());
  VectorXd mean = VectorXd::Zero(d);
  int kept = 0;
  for (const auto& rep : reps)
    if (rep.ok) {
      mean += rep.theta;
      ++kept;
    }
  out.dropped = B - kept;
  if (kept < 2) throw NumericalError("bootstrap_se: fewer than two replicates converged");
  mean /= kept;
  VectorXd ss = VectorXd::Zero(d);
  for (const auto& rep : reps)
    if (rep.ok) ss += (rep.theta - mean).cwiseAbs2();
  out.se = (ss / (kept - 1)).cwiseSqrt();
  if (out.dropped > 0)
    out.notes.push_back(std::to_string(out.dropped) + " replicate(s) dropped (no convergence)");
  return out;
}

}  // namespace

SEReport bootstrap_se(const FitResult<BasicParams>& fit, const Dataset& ds, int B,
                      std::uint64_t seed, const FitConfig& cfg) {
  const int n = static_cast<int>(std::llround(ds.n_total()));
  const int T = ds.T();
  FitConfig refit_cfg = cfg;
  refit_cfg.start = StartRule::Input;
  refit_cfg.threads = 1;
  return bootstrap_common<BasicParams>(
      fit.params, B, seed, cfg.threads,
      [&](std::uint64_t s) { return simulate_basic(fit.params, n, T, s); },
      [&](const Dataset& sim) { return fit_basic(sim, refit_cfg, &fit.params); });
}

SEReport bootstrap_se(const FitResult<CovLatentParams>& fit, const Dataset& ds, int B,
                      std::uint64_t seed, const FitConfig& cfg) {
  Dataset units = expand_units(ds);  // covariates held fixed across replicates
  FitConfig refit_cfg = cfg;
  refit_cfg.start = StartRule::Input;
  refit_cfg.threads = 1;
  return bootstrap_common<CovLatentParams>(
      fit.params, B, seed, cfg.threads,
      [&](std::uint64_t s) { return simulate_cov_latent(fit.params, units.X1, units.X2, s); },
      [&](const Dataset& sim) { return fit_cov_latent(sim, refit_cfg, &fit.params); });
}

// ---------------------------------------------------------------------------
// Delta-method natural-scale standard errors
// ---------------------------------------------------------------------------

namespace {

// se of softmax probabilities given the covariance of the free logits.
VectorXd softmax_block_se(const VectorXd& probs, int ref, const MatrixXd& cov_block) {
  const int k = static_cast<int>(probs.size());
  VectorXd out(k);
  std::vector<int> cats;
  for (int i = 0; i < k; ++i)
    if (i != ref) cats.push_back(i);
  for (int u = 0; u < k; ++u) {
    VectorXd jac(k - 1);
    for (int b = 0; b < k - 1; ++b)
      jac(b) = probs(u) * ((u == cats[b] ? 1.0 : 0.0) - probs(cats[b]));
    double v = jac.dot(cov_block * jac);
    out(u) = v > 0.0 ? std::sqrt(v) : 0.0;
  }
  return out;
}

}  // namespace

BasicParams natural_scale_se(const BasicParams& p, const MatrixXd& cov) {
  BasicParams out = p;
  const int k = p.k();
  int off = 0;
  out.initial = softmax_block_se(p.initial, 0, cov.block(off, off, k - 1, k - 1));
  off += k - 1;
  for (size_t m = 0; m < p.transition.size(); ++m)
    for (int ubar = 0; ubar < k; ++ubar) {
      out.transition[m].row(ubar) =
          softmax_block_se(p.transition[m].row(ubar).transpose(), ubar,
                           cov.block(off, off, k - 1, k - 1))
              .transpose();
      off += k - 1;
    }
  for (size_t j = 0; j < p.emission.size(); ++j) {
    const int c = static_cast<int>(p.emission[j].rows());
    for (int u = 0; u < k; ++u) {
      out.emission[j].col(u) =
          softmax_block_se(p.emission[j].col(u), 0, cov.block(off, off, c - 1, c - 1));
      off += c - 1;
    }
  }
  return out;
}

MixedParams natural_scale_se(const MixedParams& p, const MatrixXd& cov) {
  MixedParams out = p;
  const int k1 = p.k1(), k2 = p.k2();
  int off = 0;
  out.class_mass = softmax_block_se(p.class_mass, 0, cov.block(off, off, k1 - 1, k1 - 1));
  off += k1 - 1;
  for (int u = 0; u < k1; ++u) {
    out.class_initial.col(u) =
        softmax_block_se(p.class_initial.col(u), 0, cov.block(off, off, k2 - 1, k2 - 1));
    off += k2 - 1;
  }
  for (int u = 0; u < k1; ++u)
    for (int vbar = 0; vbar < k2; ++vbar) {
      out.class_transition[u].row(vbar) =
          softmax_block_se(p.class_transition[u].row(vbar).transpose(), vbar,
                           cov.block(off, off, k2 - 1, k2 - 1))
              .transpose();
      off += k2 - 1;
    }
  for (size_t j = 0; j < p.emission.size(); ++j) {
    const int c = static_cast<int>(p.emission[j].rows());
    for (int v = 0; v < k2; ++v) {
      out.emission[j].col(v) =
          softmax_block_se(p.emission[j].col(v), 0, cov.block(off, off, c - 1, c - 1));
      off += c - 1;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Model selection
// ---------------------------------------------------------------------------

namespace {

template <class FitFn>
SelectionRow run_one_size(FitFn fit_with, const FitConfig& cfg) {
  SelectionRow row;
  row.seed = cfg.seed;
  try {
    FitConfig det = cfg;
    det.start = StartRule::Deterministic;
    auto best = fit_with(det);
    int best_start = -1;  // deterministic start won
    if (cfg.start == StartRule::Random) {
      auto rnd = fit_with(cfg);
      if (rnd.loglik > best.loglik) {
        best_start = rnd.best_start;
        best = std::move(rnd);
      }
    }
    row.loglik = best.loglik;
    row.np = best.np;
    row.aic = best.aic;
    row.bic = best.bic;
    row.converged = best.converged;
    row.best_start = best_start;
  } catch (const std::exception& e) {
    row.failed = true;
    row.error = e.what();
  }
  return row;
}

void mark_minima(SelectionTable& table) {
  for (size_t i = 0; i < table.rows.size(); ++i) {
    const auto& row = table.rows[i];
    if (row.failed) continue;
    if (table.best_aic < 0 || row.aic < table.rows[table.best_aic].aic)
      table.best_aic = static_cast<int>(i);
    if (table.best_bic < 0 || row.bic < table.rows[table.best_bic].bic)
      table.best_bic = static_cast<int>(i);
  }
}

}  // namespace

SelectionTable select_states(const Dataset& ds, Variant variant, int k_min, int k_max,
                             const FitConfig& cfg) {
  if (k_min < 1 || k_max < k_min) throw DataError("select_states: invalid size range");
  SelectionTable table;
  for (int k = k_min; k <= k_max; ++k) {
    FitConfig sized = cfg;
    sized.k = k;
    SelectionRow row;
    switch (variant) {
      case Variant::Basic:
        row = run_one_size([&](const FitConfig& c) { return fit_basic(ds, c); }, sized);
        break;
      case Variant::CovLatent:
        row = run_one_size([&](const FitConfig& c) { return fit_cov_latent(ds, c); }, sized);
        break;
      case Variant::CovManifest:
        row = run_one_size([&](const FitConfig& c) { return fit_cov_manifest(ds, c); }, sized);
        break;
      case Variant::Mixed:
        throw DataError("select_states: use select_states_mixed for the mixed variant");
    }
    row.k = k;
    table.rows.push_back(std::move(row));
  }
  mark_minima(table);
  return table;
}

SelectionTable select_states_mixed(const Dataset& ds,
                                   const std::vector<std::pair<int, int>>& grid,
                                   const FitConfig& cfg) {
  if (grid.empty()) throw DataError("select_states_mixed: empty grid");
  SelectionTable table;
  for (auto [k1, k2] : grid) {
    FitConfig sized = cfg;
    sized.k1 = k1;
    sized.k2 = k2;
    SelectionRow row = run_one_size([&](const FitConfig& c) { return fit_mixed(ds, c); }, sized);
    row.k1 = k1;
    row.k2 = k2;
    table.rows.push_back(std::move(row));
  }
  mark_minima(table);
  return table;
}

}  // namespace lmpanel
