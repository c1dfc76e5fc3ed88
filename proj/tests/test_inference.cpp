#include <doctest.h>

#include <cmath>

#include "lmpanel/errors.hpp"
#include "lmpanel/inference.hpp"
#include "lmpanel/prob.hpp"
#include "test_util.hpp"

using namespace lmpanel;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

CovLatentParams small_cov_latent(TransitionParam mode) {
  CovLatentParams p;
  p.mode = mode;
  p.init_coef = MatrixXd(2, 1);
  p.init_coef << 0.4, -0.6;
  if (mode == TransitionParam::Multilogit) {
    MatrixXd a(2, 1), b(2, 1);
    a << -1.5, 0.4;
    b << -1.1, -0.3;
    p.trans_coef = {a, b};
  } else {
    p.diff.intercepts = MatrixXd::Zero(2, 2);
    p.diff.intercepts(0, 1) = -1.5;
    p.diff.intercepts(1, 0) = -1.1;
    p.diff.slopes = MatrixXd::Zero(2, 1);
    p.diff.slopes(1, 0) = 0.35;
  }
  MatrixXd psi(3, 2);
  psi << 0.6, 0.1, 0.3, 0.3, 0.1, 0.6;
  p.emission = {psi};
  return p;
}

MixedParams small_mixed() {
  MixedParams p;
  p.class_mass = VectorXd(2);
  p.class_mass << 0.35, 0.65;
  p.class_initial = MatrixXd(2, 2);
  p.class_initial << 0.8, 0.25, 0.2, 0.75;
  MatrixXd t1(2, 2), t2(2, 2);
  t1 << 0.9, 0.1, 0.4, 0.6;
  t2 << 0.55, 0.45, 0.15, 0.85;
  p.class_transition = {t1, t2};
  MatrixXd psi(2, 2);
  psi << 0.85, 0.25, 0.15, 0.75;
  p.emission = {psi};
  return p;
}

CovManifestParams small_manifest() {
  CovManifestParams p;
  p.cutpoints = VectorXd(2);
  p.cutpoints << 1.4, -0.9;
  p.support = VectorXd(2);
  p.support << 0.0, 1.7;
  p.regression = VectorXd(1);
  p.regression << 0.5;
  p.transition = MatrixXd(2, 2);
  p.transition << 0.85, 0.15, 0.25, 0.75;
  p.initial = stationary_distribution(p.transition);
  return p;
}

Dataset manifest_dataset(const CovManifestParams& truth, int n, int T, std::uint64_t seed) {
  RngStream rng(seed);
  MatrixXd X1(n, truth.p());
  std::vector<MatrixXd> X2;
  for (int i = 0; i < n; ++i) {
    for (int m = 0; m < truth.p(); ++m) X1(i, m) = rng.normal();
    MatrixXd x2(T - 1, truth.p());
    for (int t = 0; t < T - 1; ++t)
      for (int m = 0; m < truth.p(); ++m) x2(t, m) = rng.normal();
    X2.push_back(x2);
  }
  return simulate_cov_manifest(truth, X1, X2, seed + 1);
}

Dataset latent_dataset(const CovLatentParams& truth, int n, int T, std::uint64_t seed) {
  RngStream rng(seed);
  MatrixXd X1(n, 1);
  std::vector<MatrixXd> X2;
  for (int i = 0; i < n; ++i) {
    X1(i, 0) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    X2.push_back(MatrixXd::Constant(T - 1, 1, X1(i, 0)));
  }
  return simulate_cov_latent(truth, X1, X2, seed + 1);
}

double fd_loglik_gradient_max_err(const VectorXd& analytic, const VectorXd& theta,
                                  const std::function<double(const VectorXd&)>& ll) {
  double worst = 0.0;
  for (int m = 0; m < theta.size(); ++m) {
    double h = std::max(1e-6, 1e-6 * std::abs(theta(m)));
    VectorXd tp = theta, tm = theta;
    tp(m) += h;
    tm(m) -= h;
    double fd = (ll(tp) - ll(tm)) / (2.0 * h);
    double scale = std::max({1.0, std::abs(fd), std::abs(analytic(m))});
    worst = std::max(worst, std::abs(fd - analytic(m)) / scale);
  }
  return worst;
}

}  // namespace

TEST_CASE("pack/unpack round trips") {
  SUBCASE("basic") {
    BasicParams p = testutil::separated_basic_truth(4, false);
    PackedParams packed = pack_params(p);
    CategorySpec cats;
    cats.r = 1;
    cats.c = {3};
    CHECK(packed.theta.size() == np_basic(2, 4, false, cats));
    BasicParams back = p;
    unpack_params(packed.theta, back);
    CHECK(testutil::max_abs_diff(back, p) < 1e-12);
  }
  SUBCASE("uniform simplices pack to zero logits") {
    BasicParams p;
    p.initial = VectorXd::Constant(3, 1.0 / 3.0);
    p.transition = {MatrixXd::Constant(3, 3, 1.0 / 3.0)};
    p.emission = {MatrixXd::Constant(2, 3, 0.5)};
    PackedParams packed = pack_params(p);
    CHECK(packed.theta.cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("cov-latent, both parameterizations") {
    for (auto mode : {TransitionParam::Multilogit, TransitionParam::Difflogit}) {
      CovLatentParams p = small_cov_latent(mode);
      PackedParams packed = pack_params(p);
      CategorySpec cats;
      cats.r = 1;
      cats.c = {3};
      CHECK(packed.theta.size() == np_cov_latent(2, 1, 1, mode, cats));
      CovLatentParams back = p;
      unpack_params(packed.theta, back);
      PackedParams packed2 = pack_params(back);
      CHECK((packed2.theta - packed.theta).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
  SUBCASE("cov-manifest recomputes the stationary initial distribution") {
    CovManifestParams p = small_manifest();
    PackedParams packed = pack_params(p);
    CHECK(packed.theta.size() == np_cov_manifest(2, 3, 1));
    CovManifestParams back = p;
    back.initial.setZero();
    unpack_params(packed.theta, back);
    CHECK((back.initial - p.initial).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((back.transition - p.transition).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("mixed") {
    MixedParams p = small_mixed();
    PackedParams packed = pack_params(p);
    CategorySpec cats;
    cats.r = 1;
    cats.c = {2};
    CHECK(packed.theta.size() == np_mixed(2, 2, cats));
    MixedParams back = p;
    unpack_params(packed.theta, back);
    PackedParams packed2 = pack_params(back);
    CHECK((packed2.theta - packed.theta).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("np equals the packed length at the reference dimensions") {
    CategorySpec c5;
    c5.r = 1;
    c5.c = {5};
    CHECK(np_cov_latent(5, 6, 6, TransitionParam::Multilogit, c5) == 188);
    CHECK(np_cov_manifest(10, 5, 6) == 109);
    CategorySpec bin10;
    bin10.r = 10;
    bin10.c.assign(10, 2);
    CHECK(np_mixed(2, 2, bin10) == 27);
  }
  SUBCASE("boundary probabilities clamp and flag") {
    BasicParams p;
    p.initial = VectorXd(2);
    p.initial << 1.0, 0.0;
    p.transition = {MatrixXd::Identity(2, 2)};
    MatrixXd psi(2, 2);
    psi << 0.5, 0.5, 0.5, 0.5;
    p.emission = {psi};
    PackedParams packed = pack_params(p);
    CHECK(packed.clamped);
    CHECK(packed.theta(0) == doctest::Approx(-50.0));
  }
}

TEST_CASE("information-criterion arithmetic") {
  CHECK(aic(-62579.0, 109) == doctest::Approx(125376.0));
  CHECK(std::abs(bic(-62579.0, 109, 7074) - 126124.0) < 3.0);
  CHECK(std::abs(aic(-62427.0, 188) - 125230.0) < 2.0);
  CHECK(std::abs(bic(-62427.0, 188, 7074) - 126520.0) < 3.0);
  CHECK(std::abs(bic(-18347.0, 27, 4800) - 36923.0) < 3.0);
}

TEST_CASE("analytic score equals finite differences of the log-likelihood") {
  SUBCASE("basic") {
    BasicParams truth = testutil::separated_basic_truth(3, false);
    Dataset ds = simulate_basic(truth, 60, 3, 2);
    BasicParams at = truth;
    at.initial << 0.55, 0.45;  // move off the MLE so the score is nonzero
    PackedParams packed = pack_params(at);
    VectorXd s = score(at, ds);
    BasicParams work = at;
    auto ll = [&](const VectorXd& th) {
      unpack_params(th, work);
      return observed_loglik(work, ds);
    };
    CHECK(fd_loglik_gradient_max_err(s, packed.theta, ll) < 1e-4);
  }
  SUBCASE("cov-latent multilogit and difflogit") {
    for (auto mode : {TransitionParam::Multilogit, TransitionParam::Difflogit}) {
      CovLatentParams truth = small_cov_latent(mode);
      Dataset ds = latent_dataset(truth, 50, 3, 5);
      PackedParams packed = pack_params(truth);
      VectorXd s = score(truth, ds);
      CovLatentParams work = truth;
      auto ll = [&](const VectorXd& th) {
        unpack_params(th, work);
        return observed_loglik(work, ds);
      };
      CHECK(fd_loglik_gradient_max_err(s, packed.theta, ll) < 1e-4);
    }
  }
  SUBCASE("cov-manifest includes the stationary chain term") {
    CovManifestParams truth = small_manifest();
    Dataset ds = manifest_dataset(truth, 40, 3, 9);
    PackedParams packed = pack_params(truth);
    VectorXd s = score(truth, ds);
    CovManifestParams work = truth;
    auto ll = [&](const VectorXd& th) {
      unpack_params(th, work);
      return observed_loglik(work, ds);
    };
    CHECK(fd_loglik_gradient_max_err(s, packed.theta, ll) < 1e-4);
  }
  SUBCASE("mixed") {
    MixedParams truth = small_mixed();
    Dataset ds = simulate_mixed(truth, 50, 3, 12);
    PackedParams packed = pack_params(truth);
    VectorXd s = score(truth, ds);
    MixedParams work = truth;
    auto ll = [&](const VectorXd& th) {
      unpack_params(th, work);
      return observed_loglik(work, ds);
    };
    CHECK(fd_loglik_gradient_max_err(s, packed.theta, ll) < 1e-4);
  }
}

TEST_CASE("numerical information matches the closed multinomial form at k=1") {
  // k=1: the only free parameters are the emission logits; the observed
  // information of N multinomial draws in logit coordinates is
  // N (diag(p~) - p~ p~').
  BasicParams p;
  p.initial = VectorXd::Ones(1);
  p.transition = {MatrixXd::Ones(1, 1)};
  MatrixXd psi(3, 1);
  psi << 0.5, 0.3, 0.2;
  p.emission = {psi};
  Dataset ds = simulate_basic(p, 400, 2, 8);

  FitConfig cfg;
  cfg.k = 1;
  auto fit = fit_basic(ds, cfg);
  SEReport rep = numerical_information(fit.params, ds);

  double N = ds.n_total() * ds.T();
  VectorXd pt(2);
  pt << fit.params.emission[0](1, 0), fit.params.emission[0](2, 0);
  MatrixXd expected = N * (MatrixXd(pt.asDiagonal()) - pt * pt.transpose());
  CHECK((rep.info - expected).cwiseAbs().maxCoeff() < 1e-4 * expected.cwiseAbs().maxCoeff());
  for (int m = 0; m < 2; ++m) CHECK(rep.se(m) > 0.0);
}

TEST_CASE("bootstrap standard errors") {
  SUBCASE("B must be positive") {
    BasicParams truth = testutil::separated_basic_truth(3, true);
    Dataset ds = simulate_basic(truth, 50, 3, 1);
    FitConfig cfg;
    cfg.k = 2;
    cfg.homogeneous = true;
    auto fit = fit_basic(ds, cfg);
    CHECK_THROWS_AS(bootstrap_se(fit, ds, 0, 1, cfg), DataError);
  }
  SUBCASE("same seed gives identical reports") {
    BasicParams truth = testutil::separated_basic_truth(4, true);
    Dataset ds = simulate_basic(truth, 120, 4, 3);
    FitConfig cfg;
    cfg.k = 2;
    cfg.homogeneous = true;
    auto fit = fit_basic(ds, cfg);
    SEReport a = bootstrap_se(fit, ds, 12, 77, cfg);
    SEReport b = bootstrap_se(fit, ds, 12, 77, cfg);
    CHECK((a.se - b.se).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.B == 12);
  }
  SUBCASE("a deterministic model has zero spread") {
    BasicParams det;
    det.initial = VectorXd(2);
    det.initial << 1.0, 0.0;
    MatrixXd tr(2, 2);
    tr << 1.0, 0.0, 0.0, 1.0;
    det.transition = {tr};
    MatrixXd psi(2, 2);
    psi << 1.0, 0.0, 0.0, 1.0;
    det.emission = {psi};
    Dataset ds = simulate_basic(det, 40, 3, 5);
    FitResult<BasicParams> fake;
    fake.params = det;
    fake.converged = true;
    FitConfig cfg;
    cfg.k = 2;
    cfg.homogeneous = true;
    cfg.maxit = 5;
    SEReport rep = bootstrap_se(fake, ds, 5, 9, cfg);
    CHECK(rep.se.cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("simulation oracles") {
  SUBCASE("a deterministic chain yields one configuration") {
    BasicParams det;
    det.initial = VectorXd(2);
    det.initial << 1.0, 0.0;
    MatrixXd tr(2, 2);
    tr << 0.0, 1.0, 1.0, 0.0;  // alternate states
    det.transition = {tr};
    MatrixXd psi(2, 2);
    psi << 1.0, 0.0, 0.0, 1.0;
    det.emission = {psi};
    Dataset ds = simulate_basic(det, 100, 4, 11);
    REQUIRE(ds.n_config() == 1);
    CHECK(ds.yv(0) == 100.0);
    CHECK(ds.S[0](0, 0) == 0);
    CHECK(ds.S[0](1, 0) == 1);
    CHECK(ds.S[0](2, 0) == 0);
  }
  SUBCASE("k=1 responses match the emission law") {
    BasicParams p;
    p.initial = VectorXd::Ones(1);
    p.transition = {MatrixXd::Ones(1, 1)};
    MatrixXd psi(3, 1);
    psi << 0.5, 0.3, 0.2;
    p.emission = {psi};
    const int n = 5000;
    Dataset ds = simulate_basic(p, n, 1, 13);
    VectorXd freq = VectorXd::Zero(3);
    for (int i = 0; i < ds.n_config(); ++i) freq(ds.S[i](0, 0)) += ds.yv(i);
    freq /= n;
    for (int y = 0; y < 3; ++y) {
      double se = std::sqrt(psi(y, 0) * (1 - psi(y, 0)) / n);
      CHECK(std::abs(freq(y) - psi(y, 0)) < 3.0 * se);
    }
  }
  SUBCASE("transition frequencies match the chain law") {
    BasicParams p = testutil::separated_basic_truth(2, true);
    p.emission[0] << 1.0, 0.0, 0.0, 0.0, 0.0, 1.0;  // states fully visible
    const int n = 100000;
    Dataset ds = simulate_basic(p, n, 2, 17);
    MatrixXd counts = MatrixXd::Zero(2, 2);
    for (int i = 0; i < ds.n_config(); ++i) {
      int a = ds.S[i](0, 0) == 0 ? 0 : 1;
      int b = ds.S[i](1, 0) == 0 ? 0 : 1;
      counts(a, b) += ds.yv(i);
    }
    for (int a = 0; a < 2; ++a) {
      VectorXd row = counts.row(a).transpose();
      row /= row.sum();
      CHECK(std::abs(row(0) - p.transition[0](a, 0)) < 0.01);
    }
  }
}

TEST_CASE("natural-scale standard errors are finite and shaped") {
  BasicParams truth = testutil::separated_basic_truth(3, true);
  Dataset ds = simulate_basic(truth, 300, 3, 21);
  FitConfig cfg;
  cfg.k = 2;
  cfg.homogeneous = true;
  auto fit = fit_basic(ds, cfg);
  SEReport rep = numerical_information(fit.params, ds);
  Eigen::FullPivLU<MatrixXd> lu(rep.info);
  REQUIRE(lu.isInvertible());
  BasicParams nat = natural_scale_se(fit.params, lu.inverse());
  CHECK(nat.initial.size() == 2);
  for (int u = 0; u < 2; ++u) {
    CHECK(nat.initial(u) > 0.0);
    CHECK(nat.initial(u) < 0.2);
  }
  // each simplex block: se of the full block sums to ~2x cross terms; just
  // check symmetry of the two-point case (se(p) == se(1-p))
  CHECK(nat.initial(0) == doctest::Approx(nat.initial(1)).epsilon(1e-8));
}

TEST_CASE("state selection over a size range") {
  BasicParams truth = testutil::separated_basic_truth(5, true);
  Dataset ds = simulate_basic(truth, 600, 5, 29);
  FitConfig cfg;
  cfg.homogeneous = true;
  cfg.start = StartRule::Random;
  cfg.n_starts = 2;
  cfg.seed = 1;

  SUBCASE("single-size range gives one row") {
    SelectionTable t = select_states(ds, Variant::Basic, 1, 1, cfg);
    REQUIRE(t.rows.size() == 1);
    CHECK(t.best_bic == 0);
    CHECK(t.rows[0].k == 1);
  }
  SUBCASE("BIC selects the generating size") {
    SelectionTable t = select_states(ds, Variant::Basic, 1, 3, cfg);
    REQUIRE(t.rows.size() == 3);
    CHECK(t.rows[t.best_bic].k == 2);
    for (const auto& row : t.rows) {
      CHECK(!row.failed);
      CHECK(row.aic == doctest::Approx(aic(row.loglik, row.np)));
      CHECK(row.bic == doctest::Approx(bic(row.loglik, row.np, ds.n_total())));
    }
    // more states never lower the maximized log-likelihood
    CHECK(t.rows[1].loglik >= t.rows[0].loglik - 1e-6);
    CHECK(t.rows[2].loglik >= t.rows[1].loglik - 1e-3 * std::abs(t.rows[1].loglik));
  }
}

TEST_CASE("label alignment recovers a known permutation") {
  BasicParams truth = testutil::separated_basic_truth(3, true);
  BasicParams swapped = apply_state_permutation(truth, {1, 0});
  auto perm = best_emission_permutation(truth.emission, swapped.emission);
  CHECK(perm == std::vector<int>({1, 0}));
  BasicParams restored = apply_state_permutation(swapped, perm);
  CHECK(testutil::max_abs_diff(restored, truth) < 1e-15);
}
