#include "doctest.h"

#include <cmath>
#include <cstdio>

#include "model.hpp"
#include "objectives.hpp"
#include "test_util.hpp"

using namespace dcwp;
using namespace dcwp::nn;
using namespace dcwp::testutil;

TEST_SUITE_BEGIN("models");

TEST_CASE("config validation") {
  MLPConfig bad;
  bad.input_dim = 4;
  bad.classes = 2;
  bad.hidden = {8, 0};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.hidden = {};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad.hidden = {8};
  bad.input_dim = 0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("init is deterministic and Kaiming-uniform scaled") {
  MLPConfig cfg;
  cfg.input_dim = 48;
  cfg.hidden = {64, 32};
  cfg.classes = 4;
  Rng r1(42), r2(42);
  MaskedMLP a = init_weights(cfg, r1);
  MaskedMLP b = init_weights(cfg, r2);
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    for (std::size_t i = 0; i < a.weights[l].numel(); ++i)
      CHECK(a.weights[l][i] == b.weights[l][i]);
    for (std::size_t i = 0; i < a.biases[l].numel(); ++i) CHECK(a.biases[l][i] == 0.0);
  }

  // uniform bound sqrt(6/fan_in): max within bound, std within 10% of bound/sqrt(3)
  std::size_t fan_in = cfg.input_dim;
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  const Tensor& w0 = a.weights[0];
  double mx = 0.0, sumsq = 0.0;
  for (std::size_t i = 0; i < w0.numel(); ++i) {
    mx = std::max(mx, std::fabs(w0[i]));
    sumsq += w0[i] * w0[i];
  }
  double stddev = std::sqrt(sumsq / static_cast<double>(w0.numel()));
  CHECK(mx <= bound);
  CHECK(stddev == doctest::Approx(bound / std::sqrt(3.0)).epsilon(0.10));
}

TEST_CASE("masked forward identities") {
  Rng rng(7);
  MLPConfig cfg;
  cfg.input_dim = 5;
  cfg.hidden = {6, 6};
  cfg.classes = 3;
  MaskedMLP model = init_weights(cfg, rng);
  Tensor x = random_tensor(rng, {4, 5});

  // all-ones mask is bitwise identical to the dense forward
  masking::BinaryMask ones;
  for (const Tensor& w : model.weights) ones.layers.push_back(Tensor::full(w.shape(), 1.0));
  Tensor dense = model.logits(x);
  Tensor masked = model.logits(x, &ones);
  for (std::size_t i = 0; i < dense.numel(); ++i) CHECK(dense[i] == masked[i]);

  // all-zero mask with zero biases gives all-zero logits
  masking::BinaryMask zeros;
  for (const Tensor& w : model.weights) zeros.layers.push_back(Tensor(w.shape()));
  Tensor zero_logits = model.logits(x, &zeros);
  for (std::size_t i = 0; i < zero_logits.numel(); ++i) CHECK(zero_logits[i] == 0.0);
}

TEST_CASE("embeddings are unit norm") {
  Rng rng(8);
  MLPConfig cfg;
  cfg.input_dim = 7;
  cfg.hidden = {10, 9};
  cfg.classes = 2;
  MaskedMLP model = init_weights(cfg, rng);
  for (Tensor& b : model.biases) b.fill(0.05);
  Tensor x = random_tensor(rng, {12, 7});
  Tensor z = model.embeddings(x);
  REQUIRE(z.cols() == 9);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) s += z.at(r, c) * z.at(r, c);
    CHECK(std::fabs(std::sqrt(s) - 1.0) < 1e-12);
  }
}

TEST_CASE("tape forward equals inference forward") {
  MLPConfig cfg;
  cfg.input_dim = 6;
  cfg.hidden = {8, 5};
  cfg.classes = 4;
  // retry seeds until no representation row is relu-dead (zero rows are a
  // documented error of the embedding path, not what this test is about)
  MaskedMLP model;
  Tensor x;
  for (std::uint64_t seed = 9;; ++seed) {
    Rng rng(seed);
    model = init_weights(cfg, rng);
    x = random_tensor(rng, {3, 6});
    try {
      model.embeddings(x);
      break;
    } catch (const Error&) {
    }
  }
  Tape tape;
  ModelVars vars = build_forward(tape, model, x, false, nullptr, nullptr, true);
  Tensor lg = model.logits(x);
  Tensor z = model.embeddings(x);
  for (std::size_t i = 0; i < lg.numel(); ++i)
    CHECK(tape.value(vars.logits)[i] == doctest::Approx(lg[i]).epsilon(1e-15));
  for (std::size_t i = 0; i < z.numel(); ++i)
    CHECK(tape.value(vars.embeddings)[i] == doctest::Approx(z[i]).epsilon(1e-15));
}

TEST_CASE("ce-of-forward gradients match finite differences for every parameter") {
  Rng rng(10);
  MLPConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden = {5, 4};
  cfg.classes = 3;
  MaskedMLP model = init_weights(cfg, rng);
  Tensor x = random_tensor(rng, {4, 4}, -1.5, 1.5, 1e-3);
  std::vector<int> labels = {0, 1, 2, 1};

  Tape tape;
  ModelVars vars = build_forward(tape, model, x, true, nullptr, nullptr, false);
  tape.backward(loss::ce(tape, vars.logits, labels));

  for (std::size_t layer = 0; layer < model.weights.size(); ++layer) {
    for (int kind = 0; kind < 2; ++kind) {
      auto f = [&](const Tensor& probe) {
        MaskedMLP m2 = model;
        (kind == 0 ? m2.weights[layer] : m2.biases[layer]) = probe;
        Tape t;
        ModelVars v = build_forward(t, m2, x, false, nullptr, nullptr, false);
        return t.value(loss::ce(t, v.logits, labels)).item();
      };
      const Tensor& at = kind == 0 ? model.weights[layer] : model.biases[layer];
      Tensor g_fd = finite_difference_grad(f, at, 1e-5);
      const Tensor& g = tape.grad(kind == 0 ? vars.weights[layer] : vars.biases[layer]);
      CHECK(grad_error(g, g_fd) < 1e-4);
    }
  }
}

TEST_CASE("fixed binary mask zeroes gradients at pruned entries") {
  Rng rng(11);
  MLPConfig cfg;
  cfg.input_dim = 4;
  cfg.hidden = {6, 5};
  cfg.classes = 2;
  MaskedMLP model = init_weights(cfg, rng);
  masking::BinaryMask mask;
  for (const Tensor& w : model.weights) {
    Tensor layer(w.shape());
    for (std::size_t i = 0; i < layer.numel(); ++i) layer[i] = bernoulli(rng, 0.6) ? 1.0 : 0.0;
    mask.layers.push_back(std::move(layer));
  }
  Tensor x = random_tensor(rng, {5, 4});
  std::vector<int> labels = {0, 1, 0, 1, 0};
  Tape tape;
  ModelVars vars = build_forward(tape, model, x, true, nullptr, &mask, false);
  tape.backward(loss::ce(tape, vars.logits, labels));
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const Tensor& g = tape.grad(vars.weights[l]);
    for (std::size_t i = 0; i < g.numel(); ++i)
      if (mask.layers[l][i] == 0.0) CHECK(g[i] == 0.0);
  }
}

TEST_CASE("in-graph masks require frozen weights") {
  Rng rng(12);
  MLPConfig cfg;
  cfg.input_dim = 3;
  cfg.hidden = {4};
  cfg.classes = 2;
  MaskedMLP model = init_weights(cfg, rng);
  Tensor x = random_tensor(rng, {2, 3});
  Tape tape;
  std::vector<Var> masks;
  for (const Tensor& w : model.weights) masks.push_back(tape.constant(Tensor::full(w.shape(), 1.0)));
  CHECK_THROWS_AS(build_forward(tape, model, x, true, &masks, nullptr, false), Error);
}

TEST_CASE("optimizer update rules") {
  // SGD: lr 0.1 on grad 1 from w = 0 lands at -0.1
  Tensor w({1});
  Optimizer sgd(OptKind::sgd, 0.1);
  sgd.step({&w}, {Tensor({1}, {1.0})});
  CHECK(w[0] == doctest::Approx(-0.1));

  // zero gradient leaves parameters unchanged
  Tensor w2({2}, {0.5, -0.25});
  Optimizer adam(OptKind::adam, 0.01);
  adam.step({&w2}, {Tensor({2})});
  CHECK(w2[0] == 0.5);
  CHECK(w2[1] == -0.25);

  // Adam's first step has magnitude ~ lr regardless of gradient scale
  for (double scale : {1e-3, 1.0, 1e3}) {
    Tensor p({1});
    Optimizer opt(OptKind::adam, 0.01);
    opt.step({&p}, {Tensor({1}, {scale})});
    CHECK(std::fabs(p[0]) == doctest::Approx(0.01).epsilon(1e-4));
    CHECK(p[0] < 0.0);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  Rng rng(13);
  MLPConfig cfg;
  cfg.input_dim = 9;
  cfg.hidden = {7, 6};
  cfg.classes = 5;
  MaskedMLP model = init_weights(cfg, rng);
  std::string path = "test_model.ckpt";
  save_checkpoint(model, path, 777, 42);
  std::uint64_t seed = 0;
  long step = 0;
  MaskedMLP loaded = load_checkpoint(path, &seed, &step);
  CHECK(seed == 777);
  CHECK(step == 42);
  CHECK(loaded.config.hidden == cfg.hidden);
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    for (std::size_t i = 0; i < model.weights[l].numel(); ++i)
      CHECK(loaded.weights[l][i] == model.weights[l][i]);
    for (std::size_t i = 0; i < model.biases[l].numel(); ++i)
      CHECK(loaded.biases[l][i] == model.biases[l][i]);
  }
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_checkpoint("does_not_exist.ckpt"), Error);
}

TEST_SUITE_END();
