#include <doctest.h>

#include <cmath>

#include "lmpanel/decode.hpp"
#include "lmpanel/errors.hpp"
#include "lmpanel/inference.hpp"
#include "oracle.hpp"
#include "test_util.hpp"

using namespace lmpanel;
using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;

TEST_CASE("local decoding") {
  SUBCASE("one-hot posteriors give the indicated states") {
    PosteriorSet post;
    post.gamma = MatrixXd(2, 3);
    post.gamma << 0, 1, 0, 0, 0, 1;
    MatrixXi ul = local_decode({post});
    CHECK(ul(0, 0) == 2);
    CHECK(ul(0, 1) == 3);
  }
  SUBCASE("uniform posteriors break ties toward state 1") {
    PosteriorSet post;
    post.gamma = MatrixXd::Constant(3, 4, 0.25);
    MatrixXi ul = local_decode({post});
    for (int t = 0; t < 3; ++t) CHECK(ul(0, t) == 1);
  }
  SUBCASE("random posteriors match a per-row argmax") {
    RngStream rng(8);
    PosteriorSet post;
    post.gamma = MatrixXd(5, 3);
    for (int t = 0; t < 5; ++t) post.gamma.row(t) = random_simplex(3, rng).transpose();
    MatrixXi ul = local_decode({post});
    for (int t = 0; t < 5; ++t) {
      int arg = 0;
      for (int u = 1; u < 3; ++u)
        if (post.gamma(t, u) > post.gamma(t, arg)) arg = u;
      CHECK(ul(0, t) == arg + 1);
    }
  }
}

TEST_CASE("global decoding") {
  SUBCASE("deterministic emissions force the path") {
    HmmInputs h;
    h.init = VectorXd(2);
    h.init << 0.5, 0.5;
    h.trans.push_back(MatrixXd::Constant(2, 2, 0.5));
    h.trans.push_back(MatrixXd::Constant(2, 2, 0.5));
    h.emit = MatrixXd(3, 2);
    h.emit << 0, 1, 1, 0, 0, 1;
    auto path = global_decode(h);
    CHECK(path == std::vector<int>({1, 0, 1}));
  }
  SUBCASE("random instances match the exhaustive argmax") {
    RngStream rng(3);
    for (int rep = 0; rep < 25; ++rep) {
      HmmInputs h = oracle::random_instance(3, 4, 1, 3, rng);
      CHECK(global_decode(h) == oracle::viterbi(h));
    }
  }
  SUBCASE("impossible observations raise") {
    HmmInputs h;
    h.init = VectorXd(2);
    h.init << 0.5, 0.5;
    h.trans.push_back(MatrixXd::Identity(2, 2));
    h.emit = MatrixXd(2, 2);
    h.emit << 1, 0, 0, 0;  // no state explains occasion 2... given chain stays
    h.emit(1, 1) = 0.0;
    CHECK_THROWS_AS(global_decode(h), NumericalError);
  }
}

TEST_CASE("local and global decoding can disagree") {
  // Strongly persistent chain plus one noisy observation: the joint path
  // stays put while the marginal argmax flips.
  HmmInputs h;
  h.init = VectorXd(2);
  h.init << 0.999, 0.001;
  MatrixXd P(2, 2);
  P << 0.999, 0.001, 0.999, 0.001;  // state 1 almost absorbing, 2 transient
  h.trans.assign(4, P);
  h.emit = MatrixXd(5, 2);
  h.emit << 0.9, 0.1, 0.9, 0.1, 0.35, 0.65, 0.9, 0.1, 0.9, 0.1;

  PosteriorSet post = forward_backward(h);
  MatrixXi ul = local_decode({post});
  auto ug = global_decode(h);
  CHECK(ug == oracle::viterbi(h));

  bool differ = false;
  for (int t = 0; t < 5; ++t)
    if (ul(0, t) != ug[t] + 1) differ = true;
  CHECK(differ);

  // Viterbi optimality: joint probability of the global path dominates the
  // locally decoded path.
  std::vector<int> local_path(5);
  for (int t = 0; t < 5; ++t) local_path[t] = ul(0, t) - 1;
  CHECK(oracle::path_prob(h, ug) >= oracle::path_prob(h, local_path));
}

TEST_CASE("viterbi optimality against local decoding on random instances") {
  RngStream rng(19);
  for (int rep = 0; rep < 20; ++rep) {
    HmmInputs h = oracle::random_instance(3, 5, 1, 2, rng);
    PosteriorSet post = forward_backward(h);
    MatrixXi ul = local_decode({post});
    auto ug = global_decode(h);
    std::vector<int> lp(h.T());
    for (int t = 0; t < h.T(); ++t) lp[t] = ul(0, t) - 1;
    CHECK(oracle::path_prob(h, ug) >= oracle::path_prob(h, lp) - 1e-15);
  }
}

TEST_CASE("decoding is invariant to emission scaling at one occasion") {
  RngStream rng(23);
  HmmInputs h = oracle::random_instance(3, 4, 1, 3, rng);
  HmmInputs hs = h;
  hs.emit.row(2) *= 7.5;  // common factor, argmax unchanged
  CHECK(global_decode(h) == global_decode(hs));
  PosteriorSet a = forward_backward(h), b = forward_backward(hs);
  CHECK((a.gamma - b.gamma).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("decode over a dataset") {
  SUBCASE("k=1 fit decodes to all ones") {
    CategorySpec cats;
    cats.r = 1;
    cats.c = {2};
    std::vector<MatrixXi> units = {MatrixXi::Zero(3, 1), MatrixXi::Ones(3, 1)};
    Dataset ds = testutil::make_dataset(units, cats);
    FitConfig cfg;
    cfg.k = 1;
    auto fit = fit_basic(ds, cfg);
    DecodingResult dec = decode(fit.params, ds);
    CHECK((dec.local.array() == 1).all());
    CHECK((dec.global.array() == 1).all());
  }
  SUBCASE("single-transition pattern is recovered") {
    BasicParams p = testutil::separated_basic_truth(6, true);
    CategorySpec cats;
    cats.r = 1;
    cats.c = {3};
    MatrixXi u(6, 1);
    u << 0, 0, 2, 2, 2, 2;  // clean move from the low state to the high one
    Dataset ds = testutil::make_dataset({u}, cats);
    DecodingResult dec = decode(p, ds);
    MatrixXi expected(1, 6);
    expected << 1, 1, 2, 2, 2, 2;
    CHECK(dec.global == expected);
    // oracle cross-check
    HmmInputs h;
    h.init = p.initial;
    h.trans = p.transition;
    h.emit = emission_table(p.emission, ds.S[0]);
    auto path = oracle::viterbi(h);
    for (int t = 0; t < 6; ++t) CHECK(dec.global(0, t) == path[t] + 1);
  }
  SUBCASE("near-degenerate posteriors make both decodings agree") {
    BasicParams truth = testutil::separated_basic_truth(6, true);
    // sharpen the emissions so posteriors are near one-hot
    truth.emission[0] << 0.98, 0.001, 0.015, 0.009, 0.005, 0.99;
    Dataset ds = simulate_basic(truth, 80, 6, 67);
    DecodingResult dec = decode(truth, ds);
    CHECK(dec.local == dec.global);
  }
  SUBCASE("covariate shape mismatches are rejected") {
    CovLatentParams p;
    p.mode = TransitionParam::Multilogit;
    p.init_coef = MatrixXd::Zero(2, 1);  // expects p1 = 1
    p.trans_coef.assign(2, MatrixXd::Zero(2, 1));
    MatrixXd psi(2, 2);
    psi << 0.8, 0.2, 0.2, 0.8;
    p.emission = {psi};
    CategorySpec cats;
    cats.r = 1;
    cats.c = {2};
    std::vector<MatrixXi> units = {MatrixXi::Zero(3, 1)};
    Dataset ds = testutil::make_dataset(units, cats);  // p1 = 0
    CHECK_THROWS_AS(decode(p, ds), DataError);
  }
}

TEST_CASE("mixed decoding conditions on the modal class") {
  MixedParams p;
  p.class_mass = VectorXd(2);
  p.class_mass << 0.5, 0.5;
  p.class_initial = MatrixXd(2, 2);
  p.class_initial << 1.0, 0.0, 0.0, 1.0;  // class 1 starts in state 1, class 2 in state 2
  p.class_transition = {MatrixXd::Identity(2, 2), MatrixXd::Identity(2, 2)};
  MatrixXd psi(2, 2);
  psi << 0.9, 0.2, 0.1, 0.8;
  p.emission = {psi};

  CategorySpec cats;
  cats.r = 1;
  cats.c = {2};
  std::vector<MatrixXi> units = {MatrixXi::Zero(4, 1), MatrixXi::Ones(4, 1)};
  Dataset ds = testutil::make_dataset(units, cats);
  DecodingResult dec = decode(p, ds);
  // all-zero responses point to class 1 / state 1; all-ones to class 2 / state 2
  for (int t = 0; t < 4; ++t) {
    CHECK(dec.global(0, t) == 1);
    CHECK(dec.global(1, t) == 2);
  }
}
