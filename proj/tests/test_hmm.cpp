#include <doctest.h>

#include <cmath>

#include "lmpanel/hmm.hpp"
#include "lmpanel/prob.hpp"
#include "oracle.hpp"

using namespace lmpanel;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("forward log-likelihood closed forms") {
  SUBCASE("T=1 is log sum init*emit") {
    HmmInputs h;
    h.init = VectorXd(2);
    h.init << 0.3, 0.7;
    h.emit = MatrixXd(1, 2);
    h.emit << 0.5, 0.25;
    CHECK(forward_loglik(h) == doctest::Approx(std::log(0.3 * 0.5 + 0.7 * 0.25)).epsilon(1e-14));
  }
  SUBCASE("k=1 is the sum of log emissions") {
    HmmInputs h;
    h.init = VectorXd::Ones(1);
    h.trans.push_back(MatrixXd::Ones(1, 1));
    h.emit = MatrixXd(3, 1);
    h.emit << 0.5, 0.2, 0.8;
    CHECK(forward_loglik(h) ==
          doctest::Approx(std::log(0.5) + std::log(0.2) + std::log(0.8)).epsilon(1e-14));
  }
  SUBCASE("all-zero emission row signals -inf") {
    HmmInputs h;
    h.init = VectorXd(2);
    h.init << 0.5, 0.5;
    h.trans.push_back(MatrixXd::Constant(2, 2, 0.5));
    h.emit = MatrixXd(2, 2);
    h.emit << 0.5, 0.5, 0.0, 0.0;
    CHECK(forward_loglik(h) == -std::numeric_limits<double>::infinity());
  }
}

TEST_CASE("forward matches the exhaustive-path oracle") {
  RngStream rng(101);
  for (int rep = 0; rep < 30; ++rep) {
    HmmInputs h = oracle::random_instance(3, 4, 2, 3, rng);
    double ll = forward_loglik(h);
    double expected = std::log(oracle::manifest_prob(h));
    CHECK(std::abs(ll - expected) <= 1e-10 * std::abs(expected));
  }
}

TEST_CASE("scaled recursion agrees with the plain product on benign instances") {
  RngStream rng(55);
  for (int rep = 0; rep < 20; ++rep) {
    // probs >= 0.1, k<=3, T<=6: no underflow in the plain sum
    HmmInputs h;
    int k = 2 + static_cast<int>(rng.uniform() * 2);
    int T = 2 + static_cast<int>(rng.uniform() * 5);
    h.init = random_simplex(k, rng);
    for (int t = 1; t < T; ++t) h.trans.push_back(random_stochastic_matrix(k, rng));
    h.emit.resize(T, k);
    for (int t = 0; t < T; ++t)
      for (int u = 0; u < k; ++u) h.emit(t, u) = 0.1 + 0.9 * rng.uniform();
    double prob = oracle::manifest_prob(h);
    CHECK(std::abs(std::exp(forward_loglik(h)) - prob) <= 1e-12 * prob);
  }
}

TEST_CASE("forward-backward posteriors") {
  SUBCASE("uniform inputs give uniform posteriors") {
    HmmInputs h;
    const int k = 3, T = 4;
    h.init = VectorXd::Constant(k, 1.0 / k);
    h.trans.push_back(MatrixXd::Constant(k, k, 1.0 / k));
    h.emit = MatrixXd::Constant(T, k, 0.2);
    PosteriorSet post = forward_backward(h);
    for (int t = 0; t < T; ++t)
      for (int u = 0; u < k; ++u)
        CHECK(post.gamma(t, u) == doctest::Approx(1.0 / k).epsilon(1e-12));
  }
  SUBCASE("one-hot emissions pin the posteriors") {
    HmmInputs h;
    h.init = VectorXd(2);
    h.init << 0.5, 0.5;
    h.trans.push_back(MatrixXd::Constant(2, 2, 0.5));
    h.trans.push_back(MatrixXd::Constant(2, 2, 0.5));
    h.emit = MatrixXd(3, 2);
    h.emit << 1, 0, 0, 1, 1, 0;  // forces path 1,2,1
    PosteriorSet post = forward_backward(h);
    CHECK(post.gamma(0, 0) == doctest::Approx(1.0));
    CHECK(post.gamma(1, 1) == doctest::Approx(1.0));
    CHECK(post.gamma(2, 0) == doctest::Approx(1.0));
    CHECK(post.xi[0](0, 1) == doctest::Approx(1.0));
    CHECK(post.xi[1](1, 0) == doctest::Approx(1.0));
  }
  SUBCASE("gamma and xi match the exhaustive oracle") {
    RngStream rng(77);
    for (int rep = 0; rep < 20; ++rep) {
      HmmInputs h = oracle::random_instance(2, 3, 1, 3, rng);
      PosteriorSet post = forward_backward(h);
      MatrixXd g = oracle::gamma(h);
      auto x = oracle::xi(h);
      CHECK((post.gamma - g).cwiseAbs().maxCoeff() < 1e-10);
      for (size_t t = 0; t < x.size(); ++t)
        CHECK((post.xi[t] - x[t]).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("posterior marginal consistency") {
  RngStream rng(31);
  for (int rep = 0; rep < 15; ++rep) {
    HmmInputs h = oracle::random_instance(3, 5, 2, 2, rng);
    PosteriorSet post = forward_backward(h);
    CHECK(std::abs(post.loglik - forward_loglik(h)) < 1e-12 * std::abs(post.loglik));
    for (int t = 0; t < h.T(); ++t)
      CHECK(post.gamma.row(t).sum() == doctest::Approx(1.0).epsilon(1e-10));
    for (int t = 1; t < h.T(); ++t) {
      CHECK(post.xi[t - 1].sum() == doctest::Approx(1.0).epsilon(1e-10));
      // row sums equal gamma[t-1], column sums equal gamma[t]
      CHECK((post.xi[t - 1].rowwise().sum().transpose() - post.gamma.row(t - 1))
                .cwiseAbs()
                .maxCoeff() < 1e-10);
      CHECK((post.xi[t - 1].colwise().sum() - post.gamma.row(t)).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
}

TEST_CASE("likelihood is invariant under state relabeling") {
  RngStream rng(13);
  HmmInputs h = oracle::random_instance(3, 4, 1, 3, rng);
  // swap states 0 and 2 everywhere
  std::vector<int> perm = {2, 1, 0};
  HmmInputs hp;
  hp.init = VectorXd(3);
  hp.emit.resize(h.T(), 3);
  for (int u = 0; u < 3; ++u) hp.init(u) = h.init(perm[u]);
  for (int t = 0; t < h.T(); ++t)
    for (int u = 0; u < 3; ++u) hp.emit(t, u) = h.emit(t, perm[u]);
  for (const auto& P : h.trans) {
    MatrixXd Q(3, 3);
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) Q(a, b) = P(perm[a], perm[b]);
    hp.trans.push_back(Q);
  }
  CHECK(std::abs(forward_loglik(h) - forward_loglik(hp)) <
        1e-12 * std::abs(forward_loglik(h)));
}

TEST_CASE("emission table") {
  SUBCASE("single variable is a direct lookup") {
    MatrixXd psi(3, 2);
    psi << 0.2, 0.5, 0.3, 0.25, 0.5, 0.25;
    Eigen::MatrixXi resp(2, 1);
    resp << 2, 0;
    MatrixXd emit = emission_table({psi}, resp);
    CHECK(emit(0, 0) == doctest::Approx(0.5));
    CHECK(emit(0, 1) == doctest::Approx(0.25));
    CHECK(emit(1, 0) == doctest::Approx(0.2));
    CHECK(emit(1, 1) == doctest::Approx(0.5));
  }
  SUBCASE("two fair coins give 0.25 everywhere") {
    MatrixXd coin(2, 2);
    coin.setConstant(0.5);
    Eigen::MatrixXi resp(3, 2);
    resp << 0, 1, 1, 1, 0, 0;
    MatrixXd emit = emission_table({coin, coin}, resp);
    CHECK((emit.array() == 0.25).all());
  }
  SUBCASE("ten binary variables multiply") {
    // conviction probabilities per offense group for the active state
    std::vector<double> phi1 = {0.176, 0.019, 0.256, 0.026, 0.545,
                                0.111, 0.182, 0.090, 0.019, 0.209};
    std::vector<MatrixXd> psi;
    for (double p1 : phi1) {
      MatrixXd m(2, 2);
      m << 0.99, 1.0 - p1, 0.01, p1;
      psi.push_back(m);
    }
    Eigen::MatrixXi resp = Eigen::MatrixXi::Zero(1, 10);  // all-zero responses
    MatrixXd emit = emission_table(psi, resp);
    double expected = 1.0;
    for (double p1 : phi1) expected *= 1.0 - p1;
    CHECK(emit(0, 1) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(emit(0, 0) == doctest::Approx(std::pow(0.99, 10)).epsilon(1e-12));
  }
}
