#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "nef/adam.hpp"
#include "nef/gradcheck.hpp"
#include "nef/rng.hpp"
#include "nef/tape.hpp"
#include "nef/tensor.hpp"

using nef::CounterRng;
using nef::Tape;
using nef::Tensor;

namespace {

Tensor<double> random_tensor(std::int64_t r, std::int64_t c, CounterRng& rng, double lo = -1.0,
                             double hi = 1.0) {
  Tensor<double> t(r, c);
  for (auto& x : t.data) x = rng.uniform(lo, hi);
  return t;
}

// Finite-difference oracle for a single-op graph: scalar objective is a fixed
// random weighting of the op output, so the whole Jacobian is exercised.
template <typename BuildFn>
double check_op_gradient(const std::vector<Tensor<double>>& params, BuildFn build,
                         std::uint64_t weight_seed) {
  auto weights = [&](const Tensor<double>& out) {
    CounterRng wrng(weight_seed);
    Tensor<double> w(out.rows, out.cols);
    for (auto& x : w.data) x = wrng.uniform(-1.0, 1.0);
    return w;
  };
  auto objective = [&](const std::vector<Tensor<double>>& p) {
    Tape<double> tape;
    std::vector<Tape<double>::Id> ids;
    for (const auto& t : p) ids.push_back(tape.input(t, true));
    auto out = build(tape, ids);
    auto w = tape.constant(weights(tape.value(out)));
    return tape.value(tape.sum_all(tape.mul(out, w))).data[0];
  };
  auto analytic = [&](const std::vector<Tensor<double>>& p) {
    Tape<double> tape;
    std::vector<Tape<double>::Id> ids;
    for (const auto& t : p) ids.push_back(tape.input(t, true));
    auto out = build(tape, ids);
    auto w = tape.constant(weights(tape.value(out)));
    tape.backward(tape.sum_all(tape.mul(out, w)));
    std::vector<Tensor<double>> grads;
    for (auto id : ids) grads.push_back(tape.grad(id));
    return grads;
  };
  return nef::grad_check(objective, analytic, params).max_rel_error;
}

}  // namespace

TEST_CASE("matmul forward and backward on a hand example") {
  Tape<double> tape;
  auto a = tape.input(Tensor<double>::from_rows({{1, 2}, {3, 4}, {5, 6}}), true);
  auto b = tape.input(Tensor<double>::from_rows({{2}, {3}}), true);
  auto c = tape.matmul(a, b);
  CHECK(tape.value(c).rows == 3);
  CHECK(tape.value(c).cols == 1);
  CHECK(tape.value(c).at(0, 0) == doctest::Approx(8));
  CHECK(tape.value(c).at(1, 0) == doctest::Approx(18));
  CHECK(tape.value(c).at(2, 0) == doctest::Approx(28));

  tape.backward(tape.sum_all(c));
  // d sum(A*B) / dA has every row equal to B^T
  auto ga = tape.grad(a);
  for (std::int64_t i = 0; i < 3; ++i) {
    CHECK(ga.at(i, 0) == doctest::Approx(2));
    CHECK(ga.at(i, 1) == doctest::Approx(3));
  }
  auto gb = tape.grad(b);
  CHECK(gb.at(0, 0) == doctest::Approx(1 + 3 + 5));
  CHECK(gb.at(1, 0) == doctest::Approx(2 + 4 + 6));
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  Tape<double> tape;
  auto a = tape.constant(Tensor<double>::zeros(2, 3));
  auto b = tape.constant(Tensor<double>::zeros(2, 3));
  CHECK_THROWS_AS((void)tape.matmul(a, b), nef::DimensionError);
}

TEST_CASE("l2_batchnorm normalizes column mean square to one") {
  Tape<double> tape;
  auto x = tape.input(Tensor<double>::from_rows({{3}, {4}}), true);
  auto y = tape.l2_batchnorm(x);
  // column mean square (9 + 16) / 2 = 12.5, rms = 3.53553
  CHECK(tape.value(y).at(0, 0) == doctest::Approx(0.848528).epsilon(1e-5));
  CHECK(tape.value(y).at(1, 0) == doctest::Approx(1.131371).epsilon(1e-5));
}

TEST_CASE("l2_batchnorm output mean square is 1 whenever input is not tiny") {
  CounterRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::int64_t b = 2 + static_cast<std::int64_t>(rng.uniform_index(30));
    std::int64_t k = 1 + static_cast<std::int64_t>(rng.uniform_index(8));
    Tensor<double> x = random_tensor(b, k, rng, -5.0, 5.0);
    // keep every column RMS comfortably above 1e-3
    for (std::int64_t j = 0; j < k; ++j) x.at(0, j) += (x.at(0, j) >= 0 ? 1.0 : -1.0);
    Tape<double> tape;
    auto y = tape.l2_batchnorm(tape.constant(x));
    const auto& v = tape.value(y);
    for (std::int64_t j = 0; j < k; ++j) {
      double ms = 0;
      for (std::int64_t i = 0; i < b; ++i) ms += v.at(i, j) * v.at(i, j);
      ms /= static_cast<double>(b);
      CHECK(std::abs(ms - 1.0) < 1e-6);
    }
  }
}

TEST_CASE("l2_batchnorm with disabled epsilon rejects a zero column") {
  Tape<double> tape;
  auto x = tape.input(Tensor<double>::from_rows({{1, 0}, {2, 0}}), true);
  CHECK_THROWS_AS((void)tape.l2_batchnorm(x, 0.0), nef::NumericError);
}

TEST_CASE("stop_gradient passes values through bit-identically and blocks gradients") {
  CounterRng rng(7);
  Tensor<double> x = random_tensor(4, 3, rng);
  Tape<double> tape;
  auto xi = tape.input(x, true);
  auto sg = tape.stop_gradient(xi);
  const auto& v = tape.value(sg);
  for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(v.data[i] == x.data[i]);

  tape.backward(tape.sum_all(sg));
  auto g = tape.grad(xi);
  for (double gi : g.data) CHECK(gi == 0.0);
}

TEST_CASE("stop_gradient freezes one factor of a product") {
  // d/dx sum(stop(x) * x) = stop(x), evaluated at x = 2 gives 2 (not 4)
  Tape<double> tape;
  auto x = tape.input(Tensor<double>::from_rows({{2}}), true);
  auto prod = tape.mul(tape.stop_gradient(x), x);
  tape.backward(tape.sum_all(prod));
  CHECK(tape.grad(x).at(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("backward is linear over objectives sharing parameters") {
  CounterRng rng(23);
  Tensor<double> x = random_tensor(5, 4, rng);
  Tensor<double> w = random_tensor(4, 3, rng);

  auto grads_of = [&](bool with_f, bool with_g) {
    Tape<double> tape;
    auto xi = tape.input(x, true);
    auto wi = tape.input(w, true);
    auto y = tape.matmul(xi, wi);
    auto f = tape.sum_all(tape.mul(y, y));
    auto g = tape.sum_all(tape.relu(y));
    Tape<double>::Id root;
    if (with_f && with_g)
      root = tape.add(f, g);
    else
      root = with_f ? f : g;
    tape.backward(root);
    return std::pair{tape.grad(xi), tape.grad(wi)};
  };

  auto [fx, fw] = grads_of(true, false);
  auto [gx, gw] = grads_of(false, true);
  auto [sx, sw] = grads_of(true, true);
  for (std::size_t i = 0; i < sx.data.size(); ++i)
    CHECK(std::abs(sx.data[i] - (fx.data[i] + gx.data[i])) < 1e-10);
  for (std::size_t i = 0; i < sw.data.size(); ++i)
    CHECK(std::abs(sw.data[i] - (fw.data[i] + gw.data[i])) < 1e-10);
}

TEST_CASE("every differentiable op matches finite differences on random shapes") {
  CounterRng rng(1234);
  double tol = 1e-4;
  for (int trial = 0; trial < 5; ++trial) {
    std::int64_t m = 2 + static_cast<std::int64_t>(rng.uniform_index(31));
    std::int64_t k = 2 + static_cast<std::int64_t>(rng.uniform_index(31));
    std::int64_t n = 2 + static_cast<std::int64_t>(rng.uniform_index(31));
    std::uint64_t wseed = rng.next_u64();

    auto a = random_tensor(m, k, rng);
    auto b = random_tensor(k, n, rng);
    auto c = random_tensor(m, k, rng);
    auto col = random_tensor(m, 1, rng, 0.5, 2.0);
    auto row = random_tensor(1, k, rng, -2.0, 2.0);

    CHECK(check_op_gradient({a, b}, [](Tape<double>& t, auto& ids) {
            return t.matmul(ids[0], ids[1]);
          }, wseed) < tol);
    CHECK(check_op_gradient({a, c}, [](Tape<double>& t, auto& ids) {
            return t.add(ids[0], ids[1]);
          }, wseed) < tol);
    CHECK(check_op_gradient({a, c}, [](Tape<double>& t, auto& ids) {
            return t.sub(ids[0], ids[1]);
          }, wseed) < tol);
    CHECK(check_op_gradient({a, c}, [](Tape<double>& t, auto& ids) {
            return t.mul(ids[0], ids[1]);
          }, wseed) < tol);
    CHECK(check_op_gradient({a}, [](Tape<double>& t, auto& ids) {
            return t.scale(ids[0], -1.7);
          }, wseed) < tol);
    CHECK(check_op_gradient({a}, [](Tape<double>& t, auto& ids) {
            return t.add_scalar(ids[0], 0.3);
          }, wseed) < tol);
    // keep relu inputs away from the kink
    auto a_off = a;
    for (auto& x : a_off.data) x += (x >= 0 ? 0.25 : -0.25);
    CHECK(check_op_gradient({a_off}, [](Tape<double>& t, auto& ids) {
            return t.relu(ids[0]);
          }, wseed) < tol);
    CHECK(check_op_gradient({a}, [](Tape<double>& t, auto& ids) {
            return t.elu_plus_one(ids[0]);
          }, wseed) < tol);
    CHECK(check_op_gradient({col}, [](Tape<double>& t, auto& ids) {
            return t.rsqrt_shift(ids[0], 0.1);
          }, wseed) < tol);
    CHECK(check_op_gradient({a}, [](Tape<double>& t, auto& ids) {
            return t.softmax_rows(ids[0], 0.7);
          }, wseed) < tol);
    CHECK(check_op_gradient({a}, [](Tape<double>& t, auto& ids) {
            return t.l2_batchnorm(ids[0]);
          }, wseed) < tol);
    CHECK(check_op_gradient({a}, [](Tape<double>& t, auto& ids) {
            return t.transpose(ids[0]);
          }, wseed) < tol);
    CHECK(check_op_gradient({a}, [](Tape<double>& t, auto& ids) {
            return t.row_sum(ids[0]);
          }, wseed) < tol);
    CHECK(check_op_gradient({a}, [](Tape<double>& t, auto& ids) {
            return t.row_mean(ids[0]);
          }, wseed) < tol);
    CHECK(check_op_gradient({a}, [](Tape<double>& t, auto& ids) {
            return t.col_sum(ids[0]);
          }, wseed) < tol);
    CHECK(check_op_gradient({a}, [](Tape<double>& t, auto& ids) {
            return t.col_mean(ids[0]);
          }, wseed) < tol);
    CHECK(check_op_gradient({a, c}, [](Tape<double>& t, auto& ids) {
            std::vector<Tape<double>::Id> parts{ids[0], ids[1]};
            return t.concat_rows(parts);
          }, wseed) < tol);
    CHECK(check_op_gradient({a}, [m](Tape<double>& t, auto& ids) {
            return t.slice_rows(ids[0], 1, m);
          }, wseed) < tol);
    CHECK(check_op_gradient({a}, [m](Tape<double>& t, auto& ids) {
            std::vector<std::int64_t> idx{0, m - 1, 0, m / 2};
            return t.gather_rows(ids[0], idx);
          }, wseed) < tol);
    CHECK(check_op_gradient({a, col}, [](Tape<double>& t, auto& ids) {
            return t.div_cols(ids[0], ids[1]);
          }, wseed) < tol);
    CHECK(check_op_gradient({a, col}, [](Tape<double>& t, auto& ids) {
            return t.mul_cols(ids[0], ids[1]);
          }, wseed) < tol);
    CHECK(check_op_gradient({a, row}, [](Tape<double>& t, auto& ids) {
            return t.mul_rows(ids[0], ids[1]);
          }, wseed) < tol);
  }
}

TEST_CASE("grad_check itself reaches analytic precision on sum of squares") {
  auto objective = [](const std::vector<Tensor<double>>& p) {
    double s = 0;
    for (double x : p[0].data) s += x * x;
    return s;
  };
  auto analytic = [](const std::vector<Tensor<double>>& p) {
    Tensor<double> g = p[0];
    for (auto& x : g.data) x *= 2.0;
    return std::vector<Tensor<double>>{g};
  };
  auto report = nef::grad_check(objective, analytic, {Tensor<double>::from_rows({{1, 2}})});
  CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("non-finite op output raises a numeric error") {
  Tape<double> tape;
  auto x = tape.input(Tensor<double>::from_rows({{-1e308}}), true);
  // -1e308 - 1e308 overflows to -inf
  auto y = tape.constant(Tensor<double>::from_rows({{1e308}}));
  CHECK_THROWS_AS((void)tape.sub(x, y), nef::NumericError);
}

TEST_CASE("adam single step from zero state moves theta by about -lr") {
  Tensor<double> theta(1, 1, {0.0});
  std::vector<Tensor<double>*> params{&theta};
  auto state = nef::AdamState<double>::like(params);
  nef::adam_step(params, {Tensor<double>(1, 1, {0.1})}, state, 1e-3);
  // bias correction makes the first step lr * g / (|g| + eps) ~= -lr
  CHECK(theta.at(0, 0) == doctest::Approx(-1e-3).epsilon(1e-6));
}

TEST_CASE("adam with zero gradients leaves parameters bit-identical") {
  CounterRng rng(5);
  Tensor<float> theta = random_tensor(3, 3, rng).cast<float>();
  Tensor<float> before = theta;
  std::vector<Tensor<float>*> params{&theta};
  auto state = nef::AdamState<float>::like(params);
  for (int i = 0; i < 4; ++i)
    nef::adam_step(params, {Tensor<float>::zeros(3, 3)}, state, 1e-2);
  for (std::size_t i = 0; i < theta.data.size(); ++i) CHECK(theta.data[i] == before.data[i]);
}

TEST_CASE("adam is deterministic: identical state and grads give identical params") {
  CounterRng rng(99);
  auto run = [&](std::uint64_t seed) {
    CounterRng r(seed);
    Tensor<double> theta = random_tensor(4, 2, r);
    std::vector<Tensor<double>*> params{&theta};
    auto state = nef::AdamState<double>::like(params);
    for (int i = 0; i < 10; ++i) {
      CounterRng gr(seed + 1000 + static_cast<std::uint64_t>(i));
      nef::adam_step(params, {random_tensor(4, 2, gr)}, state, 3e-3);
    }
    return theta;
  };
  auto a = run(42), b = run(42);
  for (std::size_t i = 0; i < a.data.size(); ++i) CHECK(a.data[i] == b.data[i]);
}

TEST_CASE("adam rejects non-finite gradients") {
  Tensor<double> theta(1, 1, {0.0});
  std::vector<Tensor<double>*> params{&theta};
  auto state = nef::AdamState<double>::like(params);
  Tensor<double> g(1, 1);
  g.data[0] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(nef::adam_step(params, {g}, state, 1e-3), nef::NumericError);
}

TEST_CASE("softmax rows with temperature sums to one and sharpens as tau drops") {
  Tape<double> tape;
  auto x = tape.constant(Tensor<double>::from_rows({{1.0, 2.0, 0.5}}));
  auto warm = tape.value(tape.softmax_rows(x, 1.0));
  auto cold = tape.value(tape.softmax_rows(x, 0.1));
  double s = 0;
  for (double v : warm.data) s += v;
  CHECK(s == doctest::Approx(1.0));
  CHECK(cold.at(0, 1) > warm.at(0, 1));
  CHECK(cold.at(0, 1) > 0.99);
}

TEST_CASE("counter rng is replayable and forked streams differ") {
  CounterRng a(2024), b(2024);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CounterRng f1 = a.fork(1), f2 = a.fork(2);
  CHECK(f1.next_u64() != f2.next_u64());
  // forking does not perturb the parent stream
  CounterRng c(2024);
  for (int i = 0; i < 100; ++i) (void)c.next_u64();
  CHECK(a.next_u64() == c.next_u64());
}

TEST_CASE("counter rng uniforms look uniform enough for a coarse histogram") {
  CounterRng rng(77);
  int buckets[10] = {0};
  const int n = 100000;
  for (int i = 0; i < n; ++i) buckets[static_cast<int>(rng.uniform() * 10.0)]++;
  for (int b = 0; b < 10; ++b) CHECK(std::abs(buckets[b] - n / 10) < 600);
}
