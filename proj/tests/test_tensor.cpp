#include "doctest.h"

#include <cmath>

#include "test_util.hpp"

using namespace dcwp;
using namespace dcwp::testutil;

TEST_SUITE_BEGIN("tensor_autodiff");

TEST_CASE("tensor invariants") {
  Tensor t({2, 3});
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), Error);
  CHECK(Tensor::scalar(4.0).item() == 4.0);
}

TEST_CASE("relu clamps negatives, identity matmul") {
  Tape tape;
  Var x = tape.leaf(Tensor::row({-1.0, 0.0, 2.0}));
  // rank-1 relu via elementwise op on a (1,3) view is not needed; relu is rank-agnostic
  Var y = tape.relu(x);
  CHECK(tape.value(y)[0] == 0.0);
  CHECK(tape.value(y)[1] == 0.0);
  CHECK(tape.value(y)[2] == 2.0);

  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye.at(i, i) = 1.0;
  Tensor a({3, 4});
  Rng rng(7);
  for (std::size_t i = 0; i < a.numel(); ++i) a[i] = uniform(rng, -1, 1);
  Tape t2;
  Var av = t2.constant(a);
  Var ev = t2.constant(eye);
  Var prod = t2.matmul(ev, av);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(t2.value(prod)[i] == doctest::Approx(a[i]).epsilon(1e-15));
}

TEST_CASE("sigmoid value and derivative at zero") {
  Tape tape;
  Var x = tape.leaf(Tensor::scalar(0.0));
  Var s = tape.sigmoid(x);
  Var out = tape.sum(s);
  CHECK(tape.value(s).item() == doctest::Approx(0.5));
  tape.backward(out);
  CHECK(tape.grad(x).item() == doctest::Approx(0.25));
}

TEST_CASE("backward of sum gives ones; mean of squares gives 2x/n") {
  Tape tape;
  Var x = tape.leaf(Tensor::row({3.0, -1.0, 0.5}));
  Var s = tape.sum(x);
  tape.backward(s);
  for (std::size_t i = 0; i < 3; ++i) CHECK(tape.grad(x)[i] == 1.0);

  Tape t2;
  Var x2 = t2.leaf(Tensor::row({1.0, 2.0}));
  Var sq = t2.mul(x2, x2);
  Var m = t2.mean(sq);
  CHECK(t2.value(m).item() == doctest::Approx(2.5));
  t2.backward(m);
  CHECK(t2.grad(x2)[0] == doctest::Approx(1.0));
  CHECK(t2.grad(x2)[1] == doctest::Approx(2.0));
}

TEST_CASE("untouched leaves get zero gradient") {
  Tape tape;
  Var x = tape.leaf(Tensor::row({1.0, 2.0}));
  Var unused = tape.leaf(Tensor::row({5.0}));
  Var s = tape.sum(x);
  tape.backward(s);
  CHECK(tape.grad(unused)[0] == 0.0);
}

TEST_CASE("backward requires scalar output") {
  Tape tape;
  Var x = tape.leaf(Tensor::row({1.0, 2.0}));
  CHECK_THROWS_AS(tape.backward(x), Error);
}

TEST_CASE("backward is linear across scalar outputs") {
  Rng rng(11);
  Tensor x0 = random_tensor(rng, {4});
  Tape tape;
  Var x = tape.leaf(x0);
  Var f1 = tape.mean(tape.mul(x, x));
  Var f2 = tape.sum(tape.sigmoid(x));
  Var total = tape.add(f1, f2);

  tape.backward(total);
  Tensor g_total = tape.grad(x);
  tape.backward(f1);
  Tensor g1 = tape.grad(x);
  tape.backward(f2);
  Tensor g2 = tape.grad(x);

  g1.add_inplace(g2);
  for (std::size_t i = 0; i < g1.numel(); ++i)
    CHECK(g_total[i] == doctest::Approx(g1[i]).epsilon(1e-12));
}

TEST_CASE("finite difference oracle sanity") {
  auto square = [](const Tensor& t) { return t[0] * t[0]; };
  Tensor g = finite_difference_grad(square, Tensor::scalar(3.0), 1e-5);
  CHECK(g.item() == doctest::Approx(6.0).epsilon(1e-8));

  auto constant = [](const Tensor&) { return 1.25; };
  Tensor gz = finite_difference_grad(constant, Tensor::row({1.0, -2.0}), 1e-5);
  CHECK(gz[0] == 0.0);
  CHECK(gz[1] == 0.0);

  auto sig = [](const Tensor& t) { return 1.0 / (1.0 + std::exp(-t[0])); };
  Tensor gs = finite_difference_grad(sig, Tensor::scalar(0.0), 1e-5);
  CHECK(gs.item() == doctest::Approx(0.25).epsilon(1e-8));
}

TEST_CASE("shape mismatch raises structured errors") {
  Tape tape;
  Var a = tape.leaf(Tensor({2, 3}));
  Var b = tape.leaf(Tensor({3, 3}));
  CHECK_THROWS_AS(tape.add(a, b), Error);
  CHECK_THROWS_AS(tape.matmul(a, a), Error);
  Var zero_row = tape.leaf(Tensor({2, 2}));
  CHECK_THROWS_AS(tape.l2_normalize_rows(zero_row), Error);
}

TEST_CASE("l2_normalize produces unit rows") {
  Rng rng(3);
  Tensor x = random_tensor(rng, {5, 7}, -2.0, 2.0, 0.2);
  Tape tape;
  Var v = tape.l2_normalize_rows(tape.leaf(x));
  const Tensor& y = tape.value(v);
  for (std::size_t r = 0; r < 5; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 7; ++c) s += y.at(r, c) * y.at(r, c);
    CHECK(std::fabs(std::sqrt(s) - 1.0) < 1e-12);
  }
}

// Every primitive against the central-difference oracle, 100 random draws
// each, inputs in [-2,2], away from relu/abs kinks.
TEST_CASE("primitive gradients match finite differences") {
  Rng rng(1234);
  const int trials = 100;
  const double tol = 1e-4;

  for (int trial = 0; trial < trials; ++trial) {
    Tensor m1 = random_tensor(rng, {3, 4}, -2, 2, 1e-3);
    Tensor m2 = random_tensor(rng, {4, 2}, -2, 2, 1e-3);
    Tensor vec = random_tensor(rng, {4}, -2, 2, 1e-3);
    Tensor pos = random_tensor(rng, {3, 4}, 0.1, 2.0);

    auto check = [&](const std::function<Var(Tape&, Var)>& build, const Tensor& x) {
      CHECK(gradcheck(build, x) < tol);
    };

    check([&](Tape& t, Var x) { return t.sum(t.matmul(x, t.constant(m2))); }, m1);
    check([&](Tape& t, Var x) { return t.sum(t.matmul(t.constant(m1), x)); }, m2);
    check([&](Tape& t, Var x) { return t.sum(t.matmul(x, t.constant(m1), true, true)); }, m2);
    check([&](Tape& t, Var x) { return t.sum(t.matmul(t.constant(m1), x, false, true)); },
          random_tensor(rng, {2, 4}));
    check([&](Tape& t, Var x) { return t.sum(t.add(x, t.constant(m1))); }, m1);
    check([&](Tape& t, Var x) { return t.sum(t.add_rowvec(t.constant(m1), x)); }, vec);
    check([&](Tape& t, Var x) { return t.sum(t.add_rowvec(x, t.constant(vec))); }, m1);
    check([&](Tape& t, Var x) { return t.sum(t.sub(t.constant(m1), x)); }, m1);
    check([&](Tape& t, Var x) { return t.sum(t.mul(x, x)); }, m1);
    check([&](Tape& t, Var x) { return t.mean(t.scale(x, -1.7)); }, m1);
    check([&](Tape& t, Var x) { return t.sum(t.relu(x)); }, m1);
    check([&](Tape& t, Var x) { return t.sum(t.sigmoid(x)); }, m1);
    check([&](Tape& t, Var x) { return t.sum(t.exp(x)); }, m1);
    check([&](Tape& t, Var x) { return t.sum(t.log(x)); }, pos);
    check([&](Tape& t, Var x) { return t.sum(t.abs(x)); }, m1);
    check([&](Tape& t, Var x) { return t.mean(x); }, m1);
    check([&](Tape& t, Var x) { return t.sum(t.rowsum(x)); }, m1);
    check([&](Tape& t, Var x) { return t.dot(x, t.constant(vec)); }, vec);
    check([&](Tape& t, Var x) { return t.sum(t.l2_normalize_rows(x)); },
          random_tensor(rng, {3, 4}, -2, 2, 0.3));
    check([&](Tape& t, Var x) { return t.sum(t.log_softmax_rows(x)); }, m1);
    check([&](Tape& t, Var x) { return t.sum(t.gather_rows(x, {0, 2, 0})); }, m1);
    check([&](Tape& t, Var x) { return t.sum(t.take_per_row(x, {1, 3, 0})); }, m1);
  }
}

// Composite expression mixing most primitives, against the oracle.
TEST_CASE("composite loss gradient matches finite differences") {
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor w = random_tensor(rng, {4, 3}, -1.5, 1.5, 1e-3);
    Tensor x = random_tensor(rng, {5, 4}, -2, 2, 1e-3);
    auto build = [&](Tape& t, Var wv) {
      Var h = t.relu(t.matmul(t.constant(x), wv));
      Var z = t.log_softmax_rows(t.add_rowvec(h, t.constant(Tensor::row({0.1, -0.2, 0.3}))));
      Var picked = t.take_per_row(z, {0, 1, 2, 1, 0});
      return t.scale(t.mean(picked), -1.0);
    };
    CHECK(gradcheck(build, w) < 1e-4);
  }
}

TEST_SUITE_END();
