#include "doctest.h"

#include <cmath>

#include "test_util.hpp"
#include "theory.hpp"

using namespace dcwp;
using namespace dcwp::theory;

namespace {

PruneProbabilities make_pi(double pi_inv, double pi_sp, std::size_t d) {
  PruneProbabilities pi;
  pi.pi_inv = pi_inv;
  pi.pi_sp.assign(d, pi_sp);
  return pi;
}

LinearWeights unit_alpha_weights(std::size_t d) {
  LinearWeights w;
  w.w_inv = 1.0;
  w.w_sp.assign(d, 1.0);
  return w;
}

}  // namespace

TEST_SUITE_BEGIN("theory_lab");

TEST_CASE("mc_loss degenerate masks") {
  Rng rng(1);
  data::BinaryEnvSpec env{0.8, 5, 0.0};
  LinearWeights w = unit_alpha_weights(5);

  // keeping only the invariant weight reads the label directly
  McEstimate keep_inv = mc_loss(make_pi(1.0, 0.0, 5), w, env, 2000, rng);
  CHECK(keep_inv.value == 0.0);

  // pruning everything leaves sgn(0), contributing 1/2 per sample
  McEstimate none = mc_loss(make_pi(0.0, 0.0, 5), w, env, 2000, rng);
  CHECK(none.value == 0.5);
  CHECK(none.se == 0.0);
}

TEST_CASE("mc_loss matches exhaustive enumeration") {
  Rng rng(2);
  // deterministic mask at D = 15
  {
    data::BinaryEnvSpec env{0.9, 15, 0.0};
    LinearWeights w = unit_alpha_weights(15);
    PruneProbabilities pi = make_pi(1.0, 1.0, 15);
    double exact = exact_loss(pi, w, env);
    std::size_t n = 100000;
    McEstimate mc = mc_loss(pi, w, env, n, rng);
    // the event is rare here, so bound with the oracle's own variance
    double true_se = std::sqrt(exact * (1.0 - exact) / static_cast<double>(n));
    CHECK(std::fabs(mc.value - exact) < 3.0 * std::max(mc.se, true_se) + 1e-9);
    CHECK(exact > 0.0);
  }
  // fractional keep probabilities at small D, mixture environment
  {
    data::BinaryEnvSpec env{0.75, 6, 0.2};
    LinearWeights w;
    w.w_inv = 0.8;
    w.w_sp = {0.5, -0.2, 0.7, 0.3, 0.9, 0.1};
    PruneProbabilities pi;
    pi.pi_inv = 0.7;
    pi.pi_sp = {0.3, 1.0, 0.5, 0.0, 0.9, 0.25};
    double exact = exact_loss(pi, w, env);
    McEstimate mc = mc_loss(pi, w, env, 200000, rng);
    CHECK(std::fabs(mc.value - exact) < 3.0 * mc.se + 1e-9);
  }
  // enumeration limits
  LinearWeights w20 = unit_alpha_weights(21);
  data::BinaryEnvSpec env21{0.9, 21, 0.0};
  CHECK_THROWS_AS(exact_loss(make_pi(1, 1, 21), w20, env21), Error);
  data::BinaryEnvSpec env12{0.9, 12, 0.0};
  CHECK_THROWS_AS(exact_loss(make_pi(0.5, 0.5, 12), unit_alpha_weights(12), env12), Error);
}

TEST_CASE("bound formulas") {
  // test bound with pi_inv = 1 and alpha = 0 is 2 e^{-2}
  PruneProbabilities pi = make_pi(1.0, 0.0, 3);
  std::vector<double> zero_alpha(3, 0.0);
  CHECK(test_bound(pi, zero_alpha) == doctest::Approx(2.0 * std::exp(-2.0)).epsilon(1e-15));

  // fully pruned network gives the vacuous bound 2
  PruneProbabilities none = make_pi(0.0, 0.0, 3);
  std::vector<double> alphas = {0.5, 0.7, 0.9};
  CHECK(training_bound(none, alphas, 0.9) == doctest::Approx(2.0).epsilon(1e-15));

  // training bound decreases as keep-probabilities rise
  CHECK(training_bound(make_pi(1.0, 1.0, 3), alphas, 0.9) <
        training_bound(make_pi(0.5, 0.5, 3), alphas, 0.9));

  CHECK_THROWS_AS(training_bound(pi, zero_alpha, 0.5), Error);
  CHECK_THROWS_AS(mixture_bound(pi, zero_alpha, 0.75, 0.9), Error);
}

TEST_CASE("mixture bound collapses to the test bound at phi = 1 - 1/(2p)") {
  Rng rng(3);
  for (double p : {0.6, 0.75, 0.9, 0.99}) {
    double phi_star = data::debias_weight(p);
    for (int trial = 0; trial < 5; ++trial) {
      std::size_t d = 15;
      PruneProbabilities pi;
      pi.pi_inv = uniform01(rng);
      pi.pi_sp.resize(d);
      for (double& v : pi.pi_sp) v = uniform01(rng);
      std::vector<double> alphas(d);
      for (double& a : alphas) a = uniform(rng, 0.05, 1.2);
      double mix = mixture_bound(pi, alphas, p, phi_star);
      double test = test_bound(pi, alphas);
      CHECK(std::fabs(mix - test) <= 1e-12 * std::max(1.0, test));
    }
  }
}

TEST_CASE("bound validity on a reduced grid") {
  BoundsGridSpec spec;
  spec.p_values = {0.75, 0.9};
  spec.pi_values = {0.0, 0.5, 1.0};
  spec.mc_samples = 20000;
  spec.pretrain.epochs = 60;
  spec.pretrain.train_n = 4096;
  spec.pretrain.batch = 1024;
  auto rows = run_bounds_grid(spec);
  CHECK(rows.size() == 2 * 3 * 3);
  for (const auto& row : rows) {
    CHECK_FALSE(row.violation);
    CHECK(row.mc <= row.train_bound + 3.0 * row.se + 1e-12);
    // at phi = 0 the mixture bound IS the training bound
    CHECK(row.mixture_bound == doctest::Approx(row.train_bound).epsilon(1e-15));
  }
}

TEST_CASE("gradient flow reaches the analytic fixed point") {
  FlowState init;
  init.w_inv = 0.1;
  init.w_sp.assign(5, 0.05);
  FlowTrajectory traj = gradient_flow_until(0.75, init, 1e-3 * 0.5, 1e-3, 1e9, 50);
  double wstar = flow_fixed_point(0.75);
  CHECK(wstar == doctest::Approx(0.5493061443340549).epsilon(1e-12));
  for (double v : traj.terminal.w_sp) CHECK(std::fabs(v - wstar) < 1e-3);

  // w_inv strictly increases and alpha stays positive along the trajectory
  double prev = -1.0;
  for (const FlowState& s : traj.samples) {
    CHECK(s.w_inv > prev);
    prev = s.w_inv;
    for (double v : s.w_sp) CHECK(v / s.w_inv > 0.0);
  }
}

TEST_CASE("flow follows the exact solution in the neutral environment") {
  // p = 0.5 with w_sp(0) = 0 freezes the spurious weights and gives
  // w_inv(t) = log(e^{w0} + t) exactly; at t = e-1 that is 1.
  FlowState init;
  init.w_inv = 0.0;
  init.w_sp.assign(4, 0.0);
  double horizon = std::exp(1.0) - 1.0;
  FlowTrajectory traj = gradient_flow(0.5, init, horizon, 1e-3, {horizon});
  CHECK(traj.terminal.w_inv == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(traj.terminal.w_inv >= 1.0 - 1e-9);  // lower envelope with [4p(1-p)]^{D/2} = 1
  for (double v : traj.terminal.w_sp) CHECK(v == 0.0);

  Envelopes env = analytic_envelopes(0.5, init, horizon);
  CHECK(env.w_inv_lower == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("envelopes are consistent at t = 0 and sandwich the trajectory") {
  for (double p : {0.6, 0.75, 0.9}) {
    for (std::size_t d : {std::size_t{1}, std::size_t{5}, std::size_t{15}}) {
      FlowState init;
      init.w_inv = 0.1;
      init.w_sp.assign(d, 0.05);
      Envelopes at0 = analytic_envelopes(p, init, 0.0);
      CHECK(at0.w_inv_lower <= init.w_inv + 1e-12);
      CHECK(at0.w_inv_upper >= init.w_inv - 1e-12);
      CHECK(at0.w_sp_lower <= init.w_sp[0] + 1e-9);
      CHECK(at0.alpha_lower <= init.w_sp[0] / init.w_inv + 1e-9);

      FlowTrajectory traj = gradient_flow_until(p, init, 5e-3, 1e-3, 1e8, 40);
      for (const FlowState& s : traj.samples) {
        Envelopes env = analytic_envelopes(p, init, s.t);
        CHECK(s.w_inv >= env.w_inv_lower - 1e-9);
        CHECK(s.w_inv <= env.w_inv_upper + 1e-9);
        for (double v : s.w_sp) {
          CHECK(v >= env.w_sp_lower - 1e-9);
          CHECK(v / s.w_inv >= env.alpha_lower - 1e-9);
        }
      }
    }
  }
}

TEST_CASE("flow input validation") {
  FlowState bad;
  bad.w_inv = 0.1;
  bad.w_sp.assign(3, 2.0);  // above the fixed point at p = 0.75
  CHECK_THROWS_AS(gradient_flow(0.75, bad, 1.0, 1e-3, {}), Error);
  FlowState ok;
  ok.w_inv = 0.1;
  ok.w_sp.assign(3, 0.05);
  CHECK_THROWS_AS(gradient_flow(0.3, ok, 1.0, 1e-3, {}), Error);
  CHECK_THROWS_AS(gradient_flow(0.75, ok, 1.0, -1.0, {}), Error);
}

TEST_CASE("weight ratio rises with bias strength (reduced run)") {
  LinearTrainOptions opts;
  opts.train_n = 2048;
  opts.batch = 1024;
  opts.epochs = 60;
  auto pts = weight_ratio_experiment({0.6, 0.99}, 15, opts, 3, 7);
  REQUIRE(pts.size() == 2);
  CHECK(pts[0].mean_alpha < pts[1].mean_alpha);
  CHECK(pts[1].mean_alpha > 0.5);
  // unbiased accuracy decreases as the environment gets more biased
  CHECK(pts[0].test_accuracy > pts[1].test_accuracy);
}

TEST_CASE("semi-orthogonal encoder has orthonormal columns") {
  Rng rng(11);
  Tensor w = semi_orthogonal(24, 16, rng);
  for (std::size_t a = 0; a < 16; ++a)
    for (std::size_t b = 0; b < 16; ++b) {
      double dot = 0.0;
      for (std::size_t r = 0; r < 24; ++r) dot += w.at(r, a) * w.at(r, b);
      CHECK(std::fabs(dot - (a == b ? 1.0 : 0.0)) < 1e-10);
    }
  CHECK_THROWS_AS(semi_orthogonal(10, 16, rng), Error);
}

TEST_CASE("misalignment means match the closed forms") {
  Rng rng(12);
  std::size_t d = 3;
  MisalignmentResult res = misalignment_experiment(d, 0.9, 16, 20000, rng);
  double cross_want = 1.0 / static_cast<double>(d + 1);  // 0.25
  double within_want = (1.0 + 3.0 * 0.64) / 4.0;         // 0.73
  CHECK(std::fabs(res.cross_env_mean - cross_want) < 3.0 * res.cross_env_se);
  CHECK(std::fabs(res.within_biased_mean - within_want) < 3.0 * res.within_biased_se);

  CHECK_THROWS_AS(misalignment_experiment(15, 0.9, 8, 100, rng), Error);
}

TEST_CASE("misalignment gap closes at p = 0.5") {
  Rng rng(13);
  std::size_t d = 3;
  MisalignmentResult res = misalignment_experiment(d, 0.5 + 1e-12, 16, 20000, rng);
  CHECK(std::fabs(res.cross_env_mean - res.within_biased_mean) <
        3.0 * (res.cross_env_se + res.within_biased_se));
}

TEST_SUITE_END();
