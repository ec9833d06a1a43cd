#pragma once

// Finite-difference cases covering every autodiff op, shared by the unit
// tests and the acceptance run.

#include <random>
#include <string>
#include <utility>
#include <vector>

#include "damoe/autodiff.hpp"
#include "oracles.hpp"

namespace oracle {

// Generic scalar readout giving every entry a distinct gradient.
inline damoe::ad::Var weighted_square_sum(damoe::ad::Tape& t, damoe::ad::Var v) {
  using namespace damoe::ad;
  Matrix w(v.rows(), v.cols());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
  return sum(mul(mul(v, v), t.constant(w)));
}

// Worst relative gradient error per op on one random draw of inputs.
inline std::vector<std::pair<std::string, double>> op_gradient_errors(std::mt19937_64& rng) {
  using namespace damoe::ad;
  std::vector<std::pair<std::string, double>> out;
  auto unary = [&](std::string name, auto op, std::size_t r, std::size_t c, double lo = -2.0,
                   double hi = 2.0) {
    out.emplace_back(std::move(name),
                     gradient_check([&](Tape& t, std::vector<Var>& in) { return weighted_square_sum(t, op(in[0])); },
                                    {random_matrix(r, c, rng, lo, hi)}));
  };
  auto binary = [&](std::string name, auto op, std::size_t r1, std::size_t c1, std::size_t r2,
                    std::size_t c2, double lo2 = -2.0) {
    out.emplace_back(std::move(name),
                     gradient_check(
                         [&](Tape& t, std::vector<Var>& in) { return weighted_square_sum(t, op(in[0], in[1])); },
                         {random_matrix(r1, c1, rng), random_matrix(r2, c2, rng, lo2, 2.0)}));
  };

  binary("matmul", [](Var a, Var b) { return matmul(a, b); }, 3, 4, 4, 2);
  binary("add", [](Var a, Var b) { return add(a, b); }, 3, 4, 3, 4);
  binary("add (row broadcast)", [](Var a, Var b) { return add(a, b); }, 3, 4, 1, 4);
  binary("sub (column broadcast)", [](Var a, Var b) { return sub(a, b); }, 3, 4, 3, 1);
  binary("mul", [](Var a, Var b) { return mul(a, b); }, 3, 4, 3, 4);
  binary("mul (scalar broadcast)", [](Var a, Var b) { return mul(a, b); }, 3, 4, 1, 1);
  binary("div", [](Var a, Var b) { return div(a, b); }, 3, 4, 3, 4, 0.5);
  unary("scale", [](Var a) { return scale(a, -1.7); }, 3, 3);
  unary("add_scalar", [](Var a) { return add_scalar(a, 0.4); }, 3, 3);
  unary("neg", [](Var a) { return neg(a); }, 3, 3);
  unary("relu", [](Var a) { return relu(a); }, 4, 4);
  unary("exp", [](Var a) { return exp(a); }, 3, 3);
  unary("log", [](Var a) { return log(a); }, 3, 3, 0.2, 2.0);
  unary("sigmoid", [](Var a) { return sigmoid(a); }, 3, 3);
  unary("softplus", [](Var a) { return softplus(a); }, 3, 3);
  unary("normal_cdf", [](Var a) { return normal_cdf(a); }, 3, 3);
  unary("sum", [](Var a) { return sum(a); }, 4, 3);
  unary("mean", [](Var a) { return mean(a); }, 4, 3);
  unary("sum_rows", [](Var a) { return sum_rows(a); }, 4, 3);
  unary("mean_rows", [](Var a) { return mean_rows(a); }, 4, 3);
  unary("row_sum", [](Var a) { return row_sum(a); }, 4, 3);
  unary("row_mean", [](Var a) { return row_mean(a); }, 4, 3);
  unary("column", [](Var a) { return column(a, 1); }, 4, 3);
  unary("kth_largest_excluding", [](Var a) { return kth_largest_excluding(a, 2); }, 3, 4);
  const std::vector<std::size_t> gidx{2, 0, 2, 1};
  unary("gather_rows", [&](Var a) { return gather_rows(a, gidx); }, 3, 2);
  const std::vector<std::size_t> sidx{2, 0, 2, 1, 3, 0};
  unary("scatter_add_rows", [&](Var a) { return scatter_add_rows(a, sidx, 4); }, 6, 3);
  const std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 1, 1, 0};
  unary("masked_softmax", [&](Var a) { return masked_softmax(a, mask); }, 2, 4);

  const std::vector<int> labels{0, 2, 1};
  out.emplace_back("cross_entropy_sum",
                   gradient_check([&](Tape&, std::vector<Var>& in) { return cross_entropy_sum(in[0], labels); },
                                  {random_matrix(3, 3, rng)}));
  const std::vector<double> targets{1.0, 0.0, 1.0, 0.0};
  out.emplace_back("bce_with_logits_sum",
                   gradient_check([&](Tape&, std::vector<Var>& in) { return bce_with_logits_sum(in[0], targets); },
                                  {random_matrix(4, 1, rng)}));
  return out;
}

}  // namespace oracle
