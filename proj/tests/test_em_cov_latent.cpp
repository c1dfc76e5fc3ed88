#include <doctest.h>

#include <cmath>

#include "lmpanel/em_basic.hpp"
#include "lmpanel/em_cov_latent.hpp"
#include "lmpanel/errors.hpp"
#include "lmpanel/inference.hpp"
#include "lmpanel/prob.hpp"
#include "test_util.hpp"

using namespace lmpanel;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Dataset with one binary covariate (time constant) and a ternary response,
// simulated from a covariate-dependent chain.
Dataset covariate_dataset(int n, int T, std::uint64_t seed) {
  CovLatentParams truth;
  truth.mode = TransitionParam::Multilogit;
  truth.init_coef = MatrixXd(2, 1);
  truth.init_coef << 0.3, -0.8;  // intercept, slope for state 2
  for (int ubar = 0; ubar < 2; ++ubar) {
    MatrixXd m(2, 1);
    m << (ubar == 0 ? -1.8 : -2.2), (ubar == 0 ? 0.7 : -0.4);
    truth.trans_coef.push_back(m);
  }
  MatrixXd psi(3, 2);
  psi << 0.7, 0.1, 0.2, 0.2, 0.1, 0.7;
  truth.emission.push_back(psi);

  RngStream rng(seed);
  MatrixXd X1(n, 1);
  std::vector<MatrixXd> X2;
  for (int i = 0; i < n; ++i) {
    X1(i, 0) = rng.uniform() < 0.5 ? 0.0 : 1.0;
    X2.push_back(MatrixXd::Constant(T - 1, 1, X1(i, 0)));
  }
  return simulate_cov_latent(truth, X1, X2, seed + 1);
}

}  // namespace

TEST_CASE("initial probabilities from the multinomial logit") {
  SUBCASE("zero coefficients give the uniform distribution") {
    MatrixXd be = MatrixXd::Zero(3, 3);  // p1=2, k=4
    VectorXd pi = initial_probs(be, VectorXd::Zero(2));
    for (int u = 0; u < 4; ++u) CHECK(pi(u) == doctest::Approx(0.25).epsilon(1e-14));
  }
  SUBCASE("single covariate expit values") {
    MatrixXd be(2, 1);
    be << 0.0, 1.0;
    VectorXd x(1);
    x << 0.0;
    CHECK(initial_probs(be, x)(1) == doctest::Approx(0.5).epsilon(1e-14));
    x << std::log(3.0);
    VectorXd pi = initial_probs(be, x);
    CHECK(pi(0) == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(pi(1) == doctest::Approx(0.75).epsilon(1e-12));
  }
  SUBCASE("intercept column at x=0 normalizes the exponentials") {
    MatrixXd be(1, 4);
    be << 0.736261, 1.71894, 1.60361, 1.61932;
    VectorXd pi = initial_probs(be, VectorXd(0));
    double denom = 1.0 + std::exp(0.736261) + std::exp(1.71894) + std::exp(1.60361) +
                   std::exp(1.61932);
    CHECK(pi(0) == doctest::Approx(1.0 / denom).epsilon(1e-12));
    CHECK(pi(1) == doctest::Approx(std::exp(0.736261) / denom).epsilon(1e-12));
    CHECK(pi(4) == doctest::Approx(std::exp(1.61932) / denom).epsilon(1e-12));
  }
}

TEST_CASE("transition probabilities") {
  SUBCASE("zero coefficients give uniform rows") {
    std::vector<MatrixXd> ga(3, MatrixXd::Zero(2, 2));
    MatrixXd P = transition_probs_multilogit(ga, VectorXd::Zero(1));
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) CHECK(P(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  }
  SUBCASE("equal difflogit slope rows cancel") {
    DifflogitCoef coef;
    coef.intercepts = MatrixXd::Zero(2, 2);
    coef.intercepts(0, 1) = -1.0;
    coef.intercepts(1, 0) = 0.5;
    coef.slopes = MatrixXd::Ones(2, 3) * 2.0;  // identical rows
    VectorXd xa(3), xb(3);
    xa << 1, 2, 3;
    xb << -5, 0, 7;
    MatrixXd Pa = transition_probs_difflogit(coef, xa);
    MatrixXd Pb = transition_probs_difflogit(coef, xb);
    CHECK((Pa - Pb).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("multilogit row matches a direct softmax") {
    std::vector<MatrixXd> ga;
    MatrixXd g0(3, 2);  // row ubar=0: targets 1,2
    g0 << -0.5, 0.25, 1.0, -2.0;
    ga.push_back(g0);
    ga.push_back(MatrixXd::Zero(3, 2));
    ga.push_back(MatrixXd::Zero(3, 2));
    VectorXd x(2);
    x << 0.5, -1.0;
    MatrixXd P = transition_probs_multilogit(ga, x);
    // rows of each coefficient block are (intercept, x1, x2)
    double l1 = g0(0, 0) + x(0) * g0(1, 0) + x(1) * g0(2, 0);
    double l2 = g0(0, 1) + x(0) * g0(1, 1) + x(1) * g0(2, 1);
    double denom = 1.0 + std::exp(l1) + std::exp(l2);
    CHECK(P(0, 0) == doctest::Approx(1.0 / denom).epsilon(1e-12));
    CHECK(P(0, 1) == doctest::Approx(std::exp(l1) / denom).epsilon(1e-12));
    CHECK(P(0, 2) == doctest::Approx(std::exp(l2) / denom).epsilon(1e-12));
  }
  SUBCASE("difflogit is a restriction of multilogit") {
    RngStream rng(21);
    const int k = 4, p = 2;
    DifflogitCoef coef;
    coef.intercepts = MatrixXd::Zero(k, k);
    coef.slopes = MatrixXd::Zero(k, p);
    for (int a = 0; a < k; ++a)
      for (int b = 0; b < k; ++b)
        if (a != b) coef.intercepts(a, b) = 2.0 * rng.uniform() - 1.0;
    for (int a = 1; a < k; ++a)
      for (int m = 0; m < p; ++m) coef.slopes(a, m) = rng.uniform() - 0.5;

    auto multi = difflogit_to_multilogit(coef, k);
    for (int rep = 0; rep < 10; ++rep) {
      VectorXd x(p);
      for (int m = 0; m < p; ++m) x(m) = 4.0 * rng.uniform() - 2.0;
      MatrixXd Pd = transition_probs_difflogit(coef, x);
      MatrixXd Pm = transition_probs_multilogit(multi, x);
      CHECK((Pd - Pm).cwiseAbs().maxCoeff() < 1e-12);
      CHECK(is_row_stochastic(Pd, 1e-12));
    }
  }
}

TEST_CASE("np formula reproduces the reference counts") {
  CategorySpec cats;
  cats.r = 1;
  cats.c = {5};
  CHECK(np_cov_latent(5, 6, 6, TransitionParam::Multilogit, cats) == 188);
  CHECK(np_cov_latent(5, 6, 6, TransitionParam::Difflogit, cats) ==
        4 * 7 + 5 * 4 + 4 * 6 + 5 * 4);
}

TEST_CASE("zero-covariate fit reduces to the basic engine") {
  BasicParams truth = testutil::separated_basic_truth(4, true);
  Dataset ds = simulate_basic(truth, 300, 4, 17);

  FitConfig basic_cfg;
  basic_cfg.k = 2;
  basic_cfg.homogeneous = true;
  auto basic = fit_basic(ds, basic_cfg);

  FitConfig latent_cfg;
  latent_cfg.k = 2;
  auto latent = fit_cov_latent(ds, latent_cfg);

  CHECK(std::abs(latent.loglik - basic.loglik) < 1e-6 * std::abs(basic.loglik));
}

TEST_CASE("fix_psi holds the emission probabilities bit-identical") {
  Dataset ds = covariate_dataset(150, 4, 3);
  FitConfig cfg;
  cfg.k = 2;
  cfg.maxit = 30;
  CovLatentParams start = deterministic_start_cov_latent(ds, 2, TransitionParam::Multilogit);
  cfg.start = StartRule::Input;
  cfg.fix_psi = true;
  auto fit = fit_cov_latent(ds, cfg, &start);
  CHECK((fit.params.emission[0] - start.emission[0]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("m-step logits: intercept-only design equals count ratios") {
  // One covariate pattern (x empty): the weighted multinomial MLE is the
  // normalized weight vector.
  Dataset ds;
  CategorySpec cats;
  cats.r = 1;
  cats.c = {2};
  ds.categories = cats;
  Eigen::MatrixXi s(2, 1);
  s << 0, 1;
  ds.S.push_back(s);
  ds.yv = VectorXd::Ones(1);
  ds.X1.resize(1, 0);
  ds.X2.assign(1, MatrixXd(1, 0));

  CovLatentCounts counts;
  counts.loglik = 0.0;
  counts.w_init = MatrixXd(1, 3);
  counts.w_init << 10.0, 30.0, 60.0;
  MatrixXd w_tr(3, 3);
  w_tr << 5, 3, 2, 1, 8, 1, 2, 2, 6;
  counts.w_trans.assign(1, w_tr);
  counts.resp.assign(1, MatrixXd::Ones(2, 3));

  CovLatentParams params = deterministic_start_cov_latent(ds, 3, TransitionParam::Multilogit);
  Diagnostics diag;
  mstep_latent_logits(ds, counts, params, diag);

  VectorXd pi = initial_probs(params.init_coef, VectorXd(0));
  CHECK(pi(0) == doctest::Approx(0.1).epsilon(1e-8));
  CHECK(pi(1) == doctest::Approx(0.3).epsilon(1e-8));
  CHECK(pi(2) == doctest::Approx(0.6).epsilon(1e-8));

  MatrixXd P = transition_probs(params, VectorXd(0));
  for (int a = 0; a < 3; ++a) {
    VectorXd row = w_tr.row(a).transpose();
    row /= row.sum();
    CHECK((P.row(a).transpose() - row).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("m-step logits: two-pattern binary design matches an IRLS oracle") {
  // Weighted logistic regression with design (1, x), x in {0,1}: closed form
  // from the two aggregated odds.
  Dataset ds;
  CategorySpec cats;
  cats.r = 1;
  cats.c = {2};
  ds.categories = cats;
  Eigen::MatrixXi s(2, 1);
  s << 0, 0;
  for (int i = 0; i < 2; ++i) ds.S.push_back(s);
  ds.yv = VectorXd::Ones(2);
  ds.X1 = MatrixXd(2, 1);
  ds.X1 << 0.0, 1.0;
  ds.X2.assign(2, MatrixXd::Zero(1, 1));
  ds.X2[1].setOnes();

  CovLatentCounts counts;
  counts.w_init = MatrixXd(2, 2);
  counts.w_init << 40.0, 10.0, 15.0, 35.0;  // odds 0.25 at x=0, 7/3 at x=1
  counts.w_trans.assign(2, MatrixXd::Ones(2, 2));
  counts.resp.assign(1, MatrixXd::Ones(2, 2));

  CovLatentParams params = deterministic_start_cov_latent(ds, 2, TransitionParam::Multilogit);
  Diagnostics diag;
  mstep_latent_logits(ds, counts, params, diag);

  // saturated two-pattern logit: intercept = log odds at x=0, slope = log OR
  double b0 = std::log(10.0 / 40.0);
  double b1 = std::log((35.0 / 15.0) / (10.0 / 40.0));
  CHECK(params.init_coef(0, 0) == doctest::Approx(b0).epsilon(1e-6));
  CHECK(params.init_coef(1, 0) == doctest::Approx(b1).epsilon(1e-6));
}

TEST_CASE("degenerate posteriors drive coefficients to the cap") {
  Dataset ds;
  CategorySpec cats;
  cats.r = 1;
  cats.c = {2};
  ds.categories = cats;
  Eigen::MatrixXi s(2, 1);
  s << 0, 1;
  ds.S.push_back(s);
  ds.yv = VectorXd::Ones(1);
  ds.X1.resize(1, 0);
  ds.X2.assign(1, MatrixXd(1, 0));

  CovLatentCounts counts;
  counts.w_init = MatrixXd(1, 2);
  counts.w_init << 100.0, 0.0;  // all mass on the reference state
  counts.w_trans.assign(1, MatrixXd::Ones(2, 2));
  counts.resp.assign(1, MatrixXd::Ones(2, 2));

  CovLatentParams params = deterministic_start_cov_latent(ds, 2, TransitionParam::Multilogit);
  Diagnostics diag;
  mstep_latent_logits(ds, counts, params, diag);
  CHECK(params.init_coef(0, 0) == doctest::Approx(-50.0));
  CHECK(diag.coef_cap_hits >= 1);
  CHECK(initial_probs(params.init_coef, VectorXd(0))(0) > 0.999);
}

TEST_CASE("covariate fit is monotone and recovers structure") {
  Dataset ds = covariate_dataset(400, 5, 8);
  for (auto mode : {TransitionParam::Multilogit, TransitionParam::Difflogit}) {
    FitConfig cfg;
    cfg.k = 2;
    cfg.param = mode;
    auto fit = fit_cov_latent(ds, cfg);
    CHECK(fit.converged);
    for (size_t s = 1; s < fit.trace.size(); ++s)
      CHECK(fit.trace[s] - fit.trace[s - 1] >= -1e-8 * std::abs(fit.trace[s]));
    // link outputs stay valid distributions
    VectorXd x(1);
    x << 1.0;
    CHECK(is_simplex(initial_probs(fit.params.init_coef, x), 1e-12));
    CHECK(is_row_stochastic(transition_probs(fit.params, x), 1e-12));
  }
}

TEST_CASE("state permutation preserves the induced probabilities") {
  Dataset ds = covariate_dataset(120, 4, 15);
  FitConfig cfg;
  cfg.k = 2;
  cfg.maxit = 40;
  for (auto mode : {TransitionParam::Multilogit, TransitionParam::Difflogit}) {
    cfg.param = mode;
    auto fit = fit_cov_latent(ds, cfg);
    CovLatentParams perm = apply_state_permutation(fit.params, {1, 0});
    VectorXd x(1);
    for (double xv : {0.0, 1.0, -2.0}) {
      x << xv;
      VectorXd pi0 = initial_probs(fit.params.init_coef, x);
      VectorXd pi1 = initial_probs(perm.init_coef, x);
      CHECK(pi1(0) == doctest::Approx(pi0(1)).epsilon(1e-10));
      CHECK(pi1(1) == doctest::Approx(pi0(0)).epsilon(1e-10));
      MatrixXd P0 = transition_probs(fit.params, x);
      MatrixXd P1 = transition_probs(perm, x);
      CHECK(P1(0, 1) == doctest::Approx(P0(1, 0)).epsilon(1e-10));
      CHECK(P1(1, 0) == doctest::Approx(P0(0, 1)).epsilon(1e-10));
    }
  }
}
