#include <doctest.h>

#include <cmath>
#include <random>
#include <string>

#include "damoe/autodiff.hpp"
#include "damoe/errors.hpp"
#include "op_suite.hpp"
#include "oracles.hpp"

using namespace damoe;
using namespace damoe::ad;
using oracle::gradient_check;
using oracle::random_matrix;

namespace {

constexpr double kOpTol = 1e-4;

Var sum_of_squares_weighted(Tape& t, Var v) {
  // a generic scalar readout that gives every entry a distinct gradient
  Matrix w(v.rows(), v.cols());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
  return sum(mul(mul(v, v), t.constant(w)));
}

}  // namespace

TEST_CASE("matmul values and errors") {
  Tape t;
  Matrix b = {{1, 2, 3}, {4, 5, 6}};
  CHECK(matmul(t.constant(Matrix::identity(2)), t.constant(b)).value() == b);
  CHECK(matmul(t.constant({{1, 2}, {3, 4}}), t.constant({{1}, {1}})).value() == Matrix{{3}, {7}});
  try {
    matmul(t.constant(Matrix(2, 3)), t.constant(Matrix(2, 3)));
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("2x3") != std::string::npos);
  }
}

TEST_CASE("matmul gradient matches finite differences") {
  std::mt19937_64 rng(1);
  const double err = gradient_check(
      [](Tape& t, std::vector<Var>& in) { return sum_of_squares_weighted(t, matmul(in[0], in[1])); },
      {random_matrix(3, 4, rng), random_matrix(4, 2, rng)});
  CHECK(err < kOpTol);
}

TEST_CASE("scatter_add_rows") {
  Tape t;
  const std::vector<std::size_t> idx{0, 0, 1};
  CHECK(scatter_add_rows(t.constant({{1}, {2}, {3}}), idx, 2).value() == Matrix{{3}, {3}});
  const Var empty = scatter_add_rows(t.constant(Matrix(0, 3)), {}, 4);
  CHECK(empty.value() == Matrix(4, 3));
  const std::vector<std::size_t> bad{0, 5};
  CHECK_THROWS_AS(scatter_add_rows(t.constant(Matrix(2, 1)), bad, 2), IndexError);

  std::mt19937_64 rng(2);
  const std::vector<std::size_t> dst{2, 0, 2, 1, 3, 0};
  const double err = gradient_check(
      [&](Tape& tp, std::vector<Var>& in) {
        return sum_of_squares_weighted(tp, scatter_add_rows(in[0], dst, 4));
      },
      {random_matrix(6, 3, rng)});
  CHECK(err < kOpTol);
}

TEST_CASE("softplus values, overflow and gradient") {
  Tape t;
  CHECK(softplus(t.constant(Matrix::scalar(0.0))).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(softplus(t.constant(Matrix::scalar(100.0))).item() - 100.0) < 1e-6);
  CHECK(std::isfinite(softplus(t.constant(Matrix::scalar(1000.0))).item()));
  CHECK(softplus(t.constant(Matrix::scalar(-1000.0))).item() >= 0.0);

  Tape g;
  Var x = g.leaf({{-1.5, 0.0, 0.7, 3.0}}, true);
  g.backward(sum(softplus(x)));
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(x.grad()[i] == doctest::Approx(1.0 / (1.0 + std::exp(-x.value()[i]))).epsilon(1e-12));

  std::mt19937_64 rng(3);
  CHECK(gradient_check([](Tape& tp, std::vector<Var>& in) { return sum_of_squares_weighted(tp, softplus(in[0])); },
                       {random_matrix(3, 3, rng)}) < kOpTol);
}

TEST_CASE("masked_softmax") {
  Tape t;
  const std::vector<std::uint8_t> all{1, 1, 1, 1};
  const Matrix q = masked_softmax(t.constant({{1, 1, 1, 1}}), all).value();
  for (std::size_t i = 0; i < 4; ++i) CHECK(q[i] == doctest::Approx(0.25).epsilon(1e-15));

  const std::vector<std::uint8_t> one{1, 0, 0, 0};
  CHECK(masked_softmax(t.constant({{5, 1, 1, 1}}), one).value() == Matrix{{1, 0, 0, 0}});

  const std::vector<std::uint8_t> two{1, 1, 0, 0};
  const Matrix q2 = masked_softmax(t.constant({{2, 1, 0, -1}}), two).value();
  const double e2 = std::exp(2.0), e1 = std::exp(1.0);
  CHECK(q2[0] == doctest::Approx(e2 / (e2 + e1)).epsilon(1e-12));
  CHECK(q2[1] == doctest::Approx(e1 / (e2 + e1)).epsilon(1e-12));
  CHECK(std::abs(q2[0] - 0.7311) < 1e-4);
  CHECK(q2[2] == 0.0);
  CHECK(q2[3] == 0.0);

  const std::vector<std::uint8_t> none{0, 0, 0, 0};
  CHECK_THROWS_AS(masked_softmax(t.constant({{1, 2, 3, 4}}), none), SelectionError);

  std::mt19937_64 rng(4);
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 1, 1, 0};
  for (int trial = 0; trial < 50; ++trial) {
    Matrix logits = random_matrix(2, 4, rng, -5.0, 5.0);
    Matrix shifted = logits;
    for (double& v : shifted.values()) v += 3.25;
    const Matrix a = masked_softmax(t.constant(logits), mask).value();
    const Matrix b = masked_softmax(t.constant(shifted), mask).value();
    for (std::size_t r = 0; r < 2; ++r) {
      double total = 0.0;
      for (std::size_t c = 0; c < 4; ++c) {
        CHECK(a(r, c) >= 0.0);
        if (mask[r * 4 + c] == 0) CHECK(a(r, c) == 0.0);
        total += a(r, c);
      }
      CHECK(std::abs(total - 1.0) < 1e-9);
    }
    CHECK(max_abs_diff(a, b) < 1e-9);
  }
  CHECK(gradient_check(
            [&](Tape& tp, std::vector<Var>& in) { return sum_of_squares_weighted(tp, masked_softmax(in[0], mask)); },
            {random_matrix(2, 4, rng)}) < kOpTol);
}

TEST_CASE("backward contract") {
  Tape t;
  Var w = t.leaf(Matrix(3, 2, 0.5), true);
  t.backward(sum(w));
  CHECK(w.grad() == Matrix(3, 2, 1.0));

  Tape t2;
  Matrix y = {{1, -2}, {0.5, 4}};
  Var w2 = t2.leaf(y, true);
  Var d = sub(w2, t2.constant(y));
  t2.backward(mean(mul(d, d)));
  CHECK(w2.grad() == Matrix(2, 2, 0.0));

  Tape t3;
  Var v = t3.leaf(Matrix(2, 2, 1.0), true);
  CHECK_THROWS_AS(t3.backward(v), DimensionError);
}

TEST_CASE("non-grad nodes keep zero gradients and grads stay shaped") {
  std::mt19937_64 rng(5);
  Tape t;
  Var a = t.leaf(random_matrix(3, 3, rng), true);
  Var c = t.constant(random_matrix(3, 3, rng));
  Var h = relu(matmul(a, c));
  Var loss = sum(mul(h, c));
  t.backward(loss);
  CHECK(c.grad() == Matrix(3, 3, 0.0));
  CHECK(a.grad().same_shape(a.value()));
  CHECK(h.grad().same_shape(h.value()));
  CHECK(a.grad().all_finite());
}

TEST_CASE("gradients accumulate on reuse and zero_grad clears them") {
  Tape t;
  Var x = t.leaf({{2.0}}, true);
  Var y = add(mul(x, x), x);  // x used three times
  t.backward(sum(y));
  CHECK(x.grad()[0] == doctest::Approx(5.0));
  t.zero_grad();
  CHECK(x.grad()[0] == 0.0);
  t.backward(sum(y));
  t.backward(sum(y));
  CHECK(x.grad()[0] == doctest::Approx(10.0));
}

TEST_CASE("backward visits nodes in reverse creation order") {
  Tape t;
  std::vector<std::size_t> visits;
  Var x = t.leaf({{1.0}}, true);
  std::vector<Var> chain{x};
  for (int i = 0; i < 5; ++i) {
    const Var parent = chain.back();
    const std::vector<Var> parents{parent};
    chain.push_back(t.emit(parent.value(), parents, [&visits, parent](Node& self) {
      visits.push_back(self.index);
      parent.node()->grad()[0] += self.grad()[0];
    }));
  }
  // a node created later that the loss does not depend on is skipped
  const std::vector<Var> parents{x};
  Var side = t.emit(x.value(), parents, [&visits](Node& self) { visits.push_back(self.index); });
  (void)side;
  t.backward(chain.back());
  REQUIRE(visits.size() == 5);
  for (std::size_t i = 1; i < visits.size(); ++i) CHECK(visits[i] < visits[i - 1]);
  CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("clear releases every node") {
  Tape t;
  Var x = t.leaf({{1.0, 2.0}}, true);
  (void)sum(exp(x));
  CHECK(t.size() == 3);
  t.clear();
  CHECK(t.size() == 0);
}

TEST_CASE("inference tapes record no gradients") {
  Tape t(false);
  Var x = t.leaf({{1.0, -1.0}}, true);
  CHECK_FALSE(x.requires_grad());
  CHECK(relu(x).value() == Matrix{{1.0, 0.0}});
}

TEST_CASE("repeated forward passes are bitwise identical") {
  std::mt19937_64 rng(6);
  const Matrix a = random_matrix(4, 4, rng), b = random_matrix(4, 3, rng);
  auto run = [&] {
    Tape t;
    return softplus(matmul(sigmoid(t.constant(a)), t.constant(b))).value();
  };
  CHECK(run() == run());
}

TEST_CASE("elementwise and reduction ops match finite differences") {
  std::mt19937_64 rng(7);
  auto check1 = [&](auto op, std::size_t r, std::size_t c, double lo = -2.0, double hi = 2.0) {
    return gradient_check(
        [&](Tape& t, std::vector<Var>& in) { return sum_of_squares_weighted(t, op(in[0])); },
        {random_matrix(r, c, rng, lo, hi)});
  };
  auto check2 = [&](auto op, std::size_t r1, std::size_t c1, std::size_t r2, std::size_t c2,
                    double lo2 = -2.0) {
    return gradient_check(
        [&](Tape& t, std::vector<Var>& in) { return sum_of_squares_weighted(t, op(in[0], in[1])); },
        {random_matrix(r1, c1, rng), random_matrix(r2, c2, rng, lo2, 2.0)});
  };

  CHECK(check2([](Var a, Var b) { return add(a, b); }, 3, 4, 3, 4) < kOpTol);
  CHECK(check2([](Var a, Var b) { return add(a, b); }, 3, 4, 1, 4) < kOpTol);
  CHECK(check2([](Var a, Var b) { return sub(a, b); }, 3, 4, 3, 1) < kOpTol);
  CHECK(check2([](Var a, Var b) { return mul(a, b); }, 3, 4, 3, 4) < kOpTol);
  CHECK(check2([](Var a, Var b) { return mul(a, b); }, 3, 4, 1, 1) < kOpTol);
  CHECK(check2([](Var a, Var b) { return div(a, b); }, 3, 4, 3, 4, 0.5) < kOpTol);
  CHECK(check1([](Var a) { return scale(a, -1.7); }, 3, 3) < kOpTol);
  CHECK(check1([](Var a) { return add_scalar(a, 0.4); }, 3, 3) < kOpTol);
  CHECK(check1([](Var a) { return neg(a); }, 3, 3) < kOpTol);
  CHECK(check1([](Var a) { return relu(a); }, 4, 4) < kOpTol);
  CHECK(check1([](Var a) { return exp(a); }, 3, 3) < kOpTol);
  CHECK(check1([](Var a) { return log(a); }, 3, 3, 0.2, 2.0) < kOpTol);
  CHECK(check1([](Var a) { return sigmoid(a); }, 3, 3) < kOpTol);
  CHECK(check1([](Var a) { return normal_cdf(a); }, 3, 3) < kOpTol);
  CHECK(check1([](Var a) { return sum_rows(a); }, 4, 3) < kOpTol);
  CHECK(check1([](Var a) { return mean_rows(a); }, 4, 3) < kOpTol);
  CHECK(check1([](Var a) { return row_sum(a); }, 4, 3) < kOpTol);
  CHECK(check1([](Var a) { return row_mean(a); }, 4, 3) < kOpTol);
  CHECK(check1([](Var a) { return column(a, 1); }, 4, 3) < kOpTol);
  CHECK(check1([](Var a) { return mean(a); }, 4, 3) < kOpTol);
  CHECK(check1([](Var a) { return kth_largest_excluding(a, 2); }, 3, 4) < kOpTol);
  const std::vector<std::size_t> gidx{2, 0, 2, 1};
  CHECK(check1([&](Var a) { return gather_rows(a, gidx); }, 3, 2) < kOpTol);

  const std::vector<int> labels{0, 2, 1};
  CHECK(gradient_check([&](Tape&, std::vector<Var>& in) { return cross_entropy_sum(in[0], labels); },
                       {random_matrix(3, 3, rng)}) < kOpTol);
  const std::vector<double> targets{1.0, 0.0, 1.0, 0.0};
  CHECK(gradient_check([&](Tape&, std::vector<Var>& in) { return bce_with_logits_sum(in[0], targets); },
                       {random_matrix(4, 1, rng)}) < kOpTol);
}

TEST_CASE("op value spot checks") {
  Tape t;
  CHECK(normal_cdf(t.constant(Matrix::scalar(0.0))).item() == doctest::Approx(0.5));
  CHECK(mean_rows(t.constant({{1, 2}, {3, 6}})).value() == Matrix{{2, 4}});
  CHECK(row_sum(t.constant({{1, 2}, {3, 6}})).value() == Matrix{{3}, {9}});
  CHECK(kth_largest_excluding(t.constant({{3, 1, 2, 0}}), 2).value() == Matrix{{1, 2, 1, 2}});
  const std::vector<int> bad{3};
  CHECK_THROWS_AS(cross_entropy_sum(t.constant(Matrix(1, 3)), bad), ArgumentError);
}

TEST_CASE("every op in the shared suite matches finite differences") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 3; ++trial)
    for (const auto& [name, err] : oracle::op_gradient_errors(rng)) {
      INFO(name);
      CHECK(err < kOpTol);
    }
}
