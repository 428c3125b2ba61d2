#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "masking.hpp"
#include "test_util.hpp"

using namespace dcwp;
using namespace dcwp::masking;

namespace {

PruningParams single_layer(std::vector<double> logits) {
  PruningParams p;
  std::size_t n = logits.size();
  p.layers.push_back(Tensor({n}, std::move(logits)));
  return p;
}

double keep_rate(double theta, double tau, int draws, Rng& rng) {
  PruningParams p = single_layer(std::vector<double>(1, theta));
  int kept = 0;
  for (int i = 0; i < draws; ++i) {
    MaskSample s = sample_mask(p, tau, rng);
    kept += s.hard[0][0] == 1.0 ? 1 : 0;
  }
  return static_cast<double>(kept) / draws;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_SUITE_BEGIN("masking");

TEST_CASE("saturated logits always keep") {
  Rng rng(1);
  CHECK(keep_rate(50.0, 0.5, 200, rng) == 1.0);
  CHECK(keep_rate(-50.0, 0.5, 200, rng) == 0.0);
}

TEST_CASE("zero logit keeps half the time") {
  Rng rng(2);
  double rate = keep_rate(0.0, 0.5, 100000, rng);
  CHECK(std::fabs(rate - 0.5) < 0.01);
}

TEST_CASE("default init logit 1.5 keeps at sigmoid(1.5) ~ 0.8176") {
  Rng rng(3);
  double rate = keep_rate(1.5, 0.1, 100000, rng);
  CHECK(std::fabs(rate - sigmoid(1.5)) < 0.01);
}

TEST_CASE("sampling consistency: low-temperature keep rate converges to sigmoid(theta)") {
  Rng rng(4);
  const int draws = 100000;
  for (double theta : {-1.2, -0.4, 0.3, 0.9, 2.0}) {
    double pi = sigmoid(theta);
    double se = std::sqrt(pi * (1.0 - pi) / draws);
    double rate = keep_rate(theta, 0.05, draws, rng);
    CHECK(std::fabs(rate - pi) < 3.0 * se + 1e-3);
  }
}

TEST_CASE("hard forward agrees with relaxed threshold") {
  Rng rng(5);
  PruningParams p = single_layer({-0.8, -0.1, 0.0, 0.2, 1.5});
  for (int i = 0; i < 200; ++i) {
    MaskSample s = sample_mask(p, 0.5, rng);
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(s.hard[0][j] == (s.relaxed[0][j] > 0.5 ? 1.0 : 0.0));
  }
}

TEST_CASE("binarize thresholds strictly above zero") {
  PruningParams p = single_layer({0.0, 1.5, -0.3, 1e-12});
  BinaryMask m = binarize(p);
  CHECK(m.layers[0][0] == 0.0);  // boundary prunes
  CHECK(m.layers[0][1] == 1.0);
  CHECK(m.layers[0][2] == 0.0);
  CHECK(m.layers[0][3] == 1.0);

  PruningParams negative = single_layer({-1.0, -2.0, -0.5});
  BinaryMask mn = binarize(negative);
  for (std::size_t i = 0; i < 3; ++i) CHECK(mn.layers[0][i] == 0.0);
}

TEST_CASE("binarize equals majority vote of low-temperature hard samples") {
  Rng rng(6);
  PruningParams p = single_layer({-1.4, -0.1, 0.1, 0.7, 2.2});
  BinaryMask expected = binarize(p);
  const int draws = 4001;
  std::vector<int> votes(5, 0);
  for (int i = 0; i < draws; ++i) {
    MaskSample s = sample_mask(p, 0.05, rng);
    for (std::size_t j = 0; j < 5; ++j) votes[j] += s.hard[0][j] == 1.0 ? 1 : 0;
  }
  for (std::size_t j = 0; j < 5; ++j) {
    double majority = votes[j] * 2 > draws ? 1.0 : 0.0;
    CHECK(majority == expected.layers[0][j]);
  }
}

TEST_CASE("invalid temperature rejected") {
  Rng rng(7);
  PruningParams p = single_layer({0.0});
  CHECK_THROWS_AS(sample_mask(p, 0.0, rng), Error);
  CHECK_THROWS_AS(sample_mask(p, -1.0, rng), Error);
}

TEST_CASE("l1 penalty values and gradient") {
  PruningParams zeros = single_layer({0.0, 0.0, 0.0});
  CHECK(l1_penalty(zeros, 0.3) == 0.0);

  PruningParams p = single_layer({1.5, 1.5, 1.5, 1.5});
  CHECK(l1_penalty(p, 1e-8) == doctest::Approx(6e-8).epsilon(1e-12));

  // gradient sign = sign(theta) scaled by lambda, away from zero
  Rng rng(8);
  Tensor theta = testutil::random_tensor(rng, {6}, -2, 2, 0.1);
  double lambda = 0.37;
  auto build = [&](Tape& t, Var th) { return l1_penalty_var(t, {th}, lambda); };
  CHECK(testutil::gradcheck(build, theta) < 1e-4);
  Tape tape;
  Var th = tape.leaf(theta);
  tape.backward(build(tape, th));
  for (std::size_t i = 0; i < theta.numel(); ++i)
    CHECK(tape.grad(th)[i] == doctest::Approx((theta[i] > 0 ? 1.0 : -1.0) * lambda));
}

TEST_CASE("pruning ratio") {
  PruningParams ones = single_layer({1.0, 2.0, 3.0});
  CHECK(pruning_ratio(binarize(ones)) == 0.0);
  PruningParams none = single_layer({-1.0, -2.0});
  CHECK(pruning_ratio(binarize(none)) == 1.0);
  PruningParams half = single_layer({1.0, -1.0, 2.0, -2.0});
  CHECK(pruning_ratio(binarize(half)) == 0.5);
  BinaryMask empty;
  CHECK_THROWS_AS(pruning_ratio(empty), Error);
}

TEST_CASE("straight-through gradient uses the relaxed path") {
  // d sum(mask) / d theta must equal relaxed*(1-relaxed)/tau entrywise.
  Rng rng(9);
  Tensor theta = testutil::random_tensor(rng, {8}, -2, 2);
  double tau = 0.5;
  Tape tape;
  Var th = tape.leaf(theta);
  PruningParams p;
  p.layers.push_back(theta);
  std::vector<Tensor> noise = sample_logistic_noise(p, rng);
  Var mask = tape.binary_concrete(th, noise[0], tau);
  MaskSample s = mask_from_noise(p, noise, tau);
  for (std::size_t i = 0; i < theta.numel(); ++i) CHECK(tape.value(mask)[i] == s.hard[0][i]);
  tape.backward(tape.sum(mask));
  for (std::size_t i = 0; i < theta.numel(); ++i) {
    double r = s.relaxed[0][i];
    CHECK(tape.grad(th)[i] == doctest::Approx(r * (1.0 - r) / tau).epsilon(1e-12));
  }
}

TEST_CASE("mask save/load round trip") {
  PruningParams p;
  p.layers.push_back(Tensor({2, 3}, {1.0, -1.0, 2.0, -0.5, 0.0, 3.0}));
  p.layers.push_back(Tensor({4}, {-1.0, 1.0, 1.0, -2.0}));
  BinaryMask m = binarize(p);
  std::string path = "test_mask.bin";
  save_mask(m, path);
  BinaryMask loaded = load_mask(path);
  REQUIRE(loaded.layers.size() == 2);
  for (std::size_t l = 0; l < 2; ++l) {
    CHECK(loaded.layers[l].shape() == m.layers[l].shape());
    for (std::size_t i = 0; i < m.layers[l].numel(); ++i)
      CHECK(loaded.layers[l][i] == m.layers[l][i]);
  }
  std::remove(path.c_str());
  std::remove((path + ".json").c_str());
}

TEST_SUITE_END();
