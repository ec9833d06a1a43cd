#include "damoe/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "damoe/errors.hpp"

namespace damoe::ad {

Matrix& Node::grad() {
  if (!grad_.same_shape(value)) grad_ = Matrix(value.rows(), value.cols());
  return grad_;
}

double Var::item() const {
  if (value().size() != 1) throw DimensionError("item() on " + value().shape_string());
  return value()[0];
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.requires_grad = record_ && requires_grad;
  n.index = nodes_.size() - 1;
  n.tape = this;
  return Var(&n);
}

Var Tape::emit(Matrix value, std::span<const Var> parents,
               std::function<void(Node&)> backward_fn) {
  bool needs = false;
  for (const Var& p : parents) {
    if (&p.tape() != this) throw ArgumentError("operands live on different tapes");
    needs = needs || p.requires_grad();
  }
  Node& n = nodes_.emplace_back();
  n.value = std::move(value);
  n.index = nodes_.size() - 1;
  n.tape = this;
  if (record_ && needs) {
    n.requires_grad = true;
    n.backward_fn = std::move(backward_fn);
  }
  return Var(&n);
}

void Tape::backward(Var loss) {
  if (!loss.valid() || &loss.tape() != this) throw ArgumentError("backward: loss not on this tape");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw DimensionError("backward: loss must be 1x1, got " + loss.value().shape_string());
  if (!loss.requires_grad()) return;
  // interior gradients are per-call; only leaves accumulate across calls
  for (std::size_t i = 0; i <= loss.node()->index; ++i)
    if (nodes_[i].backward_fn) nodes_[i].grad().fill(0.0);
  loss.node()->grad()[0] += 1.0;
  for (std::size_t i = loss.node()->index + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.requires_grad && n.backward_fn) n.backward_fn(n);
  }
}

void Tape::zero_grad() {
  for (Node& n : nodes_) n.grad().fill(0.0);
}

void Tape::clear() { nodes_.clear(); }

namespace {

struct Broadcast {
  std::size_t rows, cols;
};

std::size_t bdim(std::size_t a, std::size_t b, bool& ok) {
  if (a == b) return a;
  if (a == 1) return b;
  if (b == 1) return a;
  ok = false;
  return 0;
}

Broadcast broadcast_shape(const Matrix& a, const Matrix& b, const char* op) {
  bool ok = true;
  Broadcast s{bdim(a.rows(), b.rows(), ok), bdim(a.cols(), b.cols(), ok)};
  if (!ok)
    throw DimensionError(std::string(op) + ": cannot broadcast " + a.shape_string() + " with " +
                         b.shape_string());
  return s;
}

inline std::size_t bidx(const Matrix& m, std::size_t r, std::size_t c) {
  return (m.rows() == 1 ? 0 : r) * m.cols() + (m.cols() == 1 ? 0 : c);
}

template <class Fwd, class DA, class DB>
Var binary(Var a, Var b, const char* name, Fwd f, DA da, DB db) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  const Broadcast s = broadcast_shape(av, bv, name);
  Matrix out(s.rows, s.cols);
  for (std::size_t r = 0; r < s.rows; ++r)
    for (std::size_t c = 0; c < s.cols; ++c) out(r, c) = f(av[bidx(av, r, c)], bv[bidx(bv, r, c)]);
  Node* pa = a.node();
  Node* pb = b.node();
  const Var parents[] = {a, b};
  return a.tape().emit(std::move(out), parents, [pa, pb, da, db](Node& self) {
    const Matrix& g = self.grad();
    const Matrix& x = pa->value;
    const Matrix& y = pb->value;
    const std::size_t R = self.value.rows(), C = self.value.cols();
    if (pa->requires_grad) {
      Matrix& gx = pa->grad();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = bidx(x, r, c), j = bidx(y, r, c);
          gx[i] += da(g(r, c), x[i], y[j]);
        }
    }
    if (pb->requires_grad) {
      Matrix& gy = pb->grad();
      for (std::size_t r = 0; r < R; ++r)
        for (std::size_t c = 0; c < C; ++c) {
          const std::size_t i = bidx(x, r, c), j = bidx(y, r, c);
          gy[j] += db(g(r, c), x[i], y[j]);
        }
    }
  });
}

// Backward derivative is expressed in terms of input x and output y.
template <class Fwd, class Deriv>
Var unary(Var a, Fwd f, Deriv d) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), av.cols());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  Node* pa = a.node();
  const Var parents[] = {a};
  return a.tape().emit(std::move(out), parents, [pa, d](Node& self) {
    const Matrix& g = self.grad();
    Matrix& gx = pa->grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * d(pa->value[i], self.value[i]);
  });
}

double stable_sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

}  // namespace

Var matmul(Var a, Var b) {
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows())
    throw DimensionError("matmul: inner dimensions differ, " + av.shape_string() + " x " +
                         bv.shape_string());
  Matrix out(av.rows(), bv.cols());
  gemm_accumulate(av, bv, out);
  Node* pa = a.node();
  Node* pb = b.node();
  const Var parents[] = {a, b};
  return a.tape().emit(std::move(out), parents, [pa, pb](Node& self) {
    const Matrix& g = self.grad();
    if (pa->requires_grad) gemm_nt_accumulate(g, pb->value, pa->grad());  // dA = dC B^T
    if (pb->requires_grad) gemm_tn_accumulate(pa->value, g, pb->grad());  // dB = A^T dC
  });
}

Var add(Var a, Var b) {
  return binary(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return g; });
}

Var sub(Var a, Var b) {
  return binary(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double g, double, double) { return g; }, [](double g, double, double) { return -g; });
}

Var mul(Var a, Var b) {
  return binary(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double g, double, double y) { return g * y; },
      [](double g, double x, double) { return g * x; });
}

Var div(Var a, Var b) {
  return binary(
      a, b, "div", [](double x, double y) { return x / y; },
      [](double g, double, double y) { return g / y; },
      [](double g, double x, double y) { return -g * x / (y * y); });
}

Var scale(Var a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Var add_scalar(Var a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Var neg(Var a) { return scale(a, -1.0); }

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sigmoid(Var a) {
  return unary(a, stable_sigmoid, [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(a, stable_softplus, [](double x, double) { return stable_sigmoid(x); });
}

Var normal_cdf(Var a) {
  return unary(
      a, [](double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); },
      [](double x, double) {
        return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
      });
}

Var sum(Var a) {
  Node* pa = a.node();
  const Var parents[] = {a};
  return a.tape().emit(Matrix::scalar(a.value().sum()), parents, [pa](Node& self) {
    const double g = self.grad()[0];
    for (double& v : pa->grad().values()) v += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw DimensionError("mean of empty matrix");
  return scale(sum(a), 1.0 / n);
}

Var sum_rows(Var a) {
  const Matrix& av = a.value();
  Matrix out(1, av.cols());
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out[c] += av(r, c);
  Node* pa = a.node();
  const Var parents[] = {a};
  return a.tape().emit(std::move(out), parents, [pa](Node& self) {
    const Matrix& g = self.grad();
    Matrix& gx = pa->grad();
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += g[c];
  });
}

Var mean_rows(Var a) {
  if (a.rows() == 0) throw DimensionError("mean_rows of matrix with no rows");
  return scale(sum_rows(a), 1.0 / static_cast<double>(a.rows()));
}

Var row_sum(Var a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r)
    for (std::size_t c = 0; c < av.cols(); ++c) out[r] += av(r, c);
  Node* pa = a.node();
  const Var parents[] = {a};
  return a.tape().emit(std::move(out), parents, [pa](Node& self) {
    const Matrix& g = self.grad();
    Matrix& gx = pa->grad();
    for (std::size_t r = 0; r < gx.rows(); ++r)
      for (std::size_t c = 0; c < gx.cols(); ++c) gx(r, c) += g[r];
  });
}

Var row_mean(Var a) {
  if (a.cols() == 0) throw DimensionError("row_mean of matrix with no columns");
  return scale(row_sum(a), 1.0 / static_cast<double>(a.cols()));
}

Var column(Var a, std::size_t j) {
  const Matrix& av = a.value();
  if (j >= av.cols())
    throw IndexError("column " + std::to_string(j) + " of " + av.shape_string());
  Matrix out(av.rows(), 1);
  for (std::size_t r = 0; r < av.rows(); ++r) out[r] = av(r, j);
  Node* pa = a.node();
  const Var parents[] = {a};
  return a.tape().emit(std::move(out), parents, [pa, j](Node& self) {
    const Matrix& g = self.grad();
    Matrix& gx = pa->grad();
    for (std::size_t r = 0; r < gx.rows(); ++r) gx(r, j) += g[r];
  });
}

Var scatter_add_rows(Var src, std::span<const std::size_t> dst_index, std::size_t n_rows) {
  const Matrix& sv = src.value();
  if (dst_index.size() != sv.rows())
    throw DimensionError("scatter_add_rows: " + std::to_string(dst_index.size()) +
                         " indices for source " + sv.shape_string());
  const std::size_t d = sv.cols();
  Matrix out(n_rows, d);
  for (std::size_t i = 0; i < dst_index.size(); ++i) {
    const std::size_t j = dst_index[i];
    if (j >= n_rows)
      throw IndexError("scatter_add_rows: index " + std::to_string(j) + " at position " +
                       std::to_string(i) + " not below " + std::to_string(n_rows));
    for (std::size_t c = 0; c < d; ++c) out(j, c) += sv(i, c);
  }
  Node* ps = src.node();
  std::vector<std::size_t> idx(dst_index.begin(), dst_index.end());
  const Var parents[] = {src};
  return src.tape().emit(std::move(out), parents, [ps, idx = std::move(idx), d](Node& self) {
    const Matrix& g = self.grad();
    Matrix& gs = ps->grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) gs(i, c) += g(idx[i], c);
  });
}

Var gather_rows(Var src, std::span<const std::size_t> index) {
  const Matrix& sv = src.value();
  const std::size_t d = sv.cols();
  Matrix out(index.size(), d);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= sv.rows())
      throw IndexError("gather_rows: index " + std::to_string(index[i]) + " not below " +
                       std::to_string(sv.rows()));
    for (std::size_t c = 0; c < d; ++c) out(i, c) = sv(index[i], c);
  }
  Node* ps = src.node();
  std::vector<std::size_t> idx(index.begin(), index.end());
  const Var parents[] = {src};
  return src.tape().emit(std::move(out), parents, [ps, idx = std::move(idx), d](Node& self) {
    const Matrix& g = self.grad();
    Matrix& gs = ps->grad();
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) gs(idx[i], c) += g(i, c);
  });
}

Var masked_softmax(Var logits, std::span<const std::uint8_t> mask) {
  const Matrix& lv = logits.value();
  if (mask.size() != lv.size())
    throw DimensionError("masked_softmax: mask of length " + std::to_string(mask.size()) +
                         " for logits " + lv.shape_string());
  const std::size_t R = lv.rows(), C = lv.cols();
  Matrix out(R, C);
  for (std::size_t r = 0; r < R; ++r) {
    double mx = -INFINITY;
    bool any = false;
    for (std::size_t c = 0; c < C; ++c)
      if (mask[r * C + c]) {
        mx = std::max(mx, lv(r, c));
        any = true;
      }
    if (!any) throw SelectionError("masked_softmax: row " + std::to_string(r) + " has no selected entry");
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c)
      if (mask[r * C + c]) {
        out(r, c) = std::exp(lv(r, c) - mx);
        z += out(r, c);
      }
    for (std::size_t c = 0; c < C; ++c) out(r, c) /= z;
  }
  Node* pl = logits.node();
  const Var parents[] = {logits};
  return logits.tape().emit(std::move(out), parents, [pl](Node& self) {
    const Matrix& g = self.grad();
    const Matrix& y = self.value;
    Matrix& gx = pl->grad();
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += y(r, c) * g(r, c);
      // Unselected entries have y == 0 and therefore receive no gradient.
      for (std::size_t c = 0; c < y.cols(); ++c) gx(r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
}

Var kth_largest_excluding(Var scores, std::size_t k) {
  const Matrix& sv = scores.value();
  const std::size_t R = sv.rows(), C = sv.cols();
  if (k == 0 || k + 1 > C)
    throw ArgumentError("kth_largest_excluding: need 1 <= k <= cols-1, got k=" + std::to_string(k) +
                        " cols=" + std::to_string(C));
  Matrix out(R, C);
  std::vector<std::size_t> source(R * C);
  std::vector<std::size_t> order(C);
  for (std::size_t r = 0; r < R; ++r) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return sv(r, x) > sv(r, y); });
    for (std::size_t i = 0; i < C; ++i) {
      std::size_t seen = 0;
      for (std::size_t j : order) {
        if (j == i) continue;
        if (++seen == k) {
          out(r, i) = sv(r, j);
          source[r * C + i] = j;
          break;
        }
      }
    }
  }
  Node* ps = scores.node();
  const Var parents[] = {scores};
  return scores.tape().emit(std::move(out), parents, [ps, source = std::move(source)](Node& self) {
    const Matrix& g = self.grad();
    Matrix& gs = ps->grad();
    const std::size_t C = g.cols();
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t i = 0; i < C; ++i) gs(r, source[r * C + i]) += g(r, i);
  });
}

Var cross_entropy_sum(Var logits, std::span<const int> labels) {
  const Matrix& lv = logits.value();
  if (labels.size() != lv.rows())
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                         lv.shape_string());
  const std::size_t C = lv.cols();
  Matrix probs(lv.rows(), C);
  double total = 0.0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    const int y = labels[r];
    if (y < 0 || static_cast<std::size_t>(y) >= C)
      throw ArgumentError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(C) + ")");
    double mx = -INFINITY;
    for (std::size_t c = 0; c < C; ++c) mx = std::max(mx, lv(r, c));
    double z = 0.0;
    for (std::size_t c = 0; c < C; ++c) {
      probs(r, c) = std::exp(lv(r, c) - mx);
      z += probs(r, c);
    }
    for (std::size_t c = 0; c < C; ++c) probs(r, c) /= z;
    total += -(lv(r, y) - mx - std::log(z));
  }
  Node* pl = logits.node();
  std::vector<int> ys(labels.begin(), labels.end());
  const Var parents[] = {logits};
  return logits.tape().emit(
      Matrix::scalar(total), parents,
      [pl, probs = std::move(probs), ys = std::move(ys)](Node& self) {
        const double g = self.grad()[0];
        Matrix& gx = pl->grad();
        for (std::size_t r = 0; r < probs.rows(); ++r)
          for (std::size_t c = 0; c < probs.cols(); ++c)
            gx(r, c) += g * (probs(r, c) - (static_cast<int>(c) == ys[r] ? 1.0 : 0.0));
      });
}

Var bce_with_logits_sum(Var logits, std::span<const double> targets) {
  const Matrix& lv = logits.value();
  if (targets.size() != lv.size())
    throw DimensionError("bce_with_logits: " + std::to_string(targets.size()) +
                         " targets for logits " + lv.shape_string());
  double total = 0.0;
  for (std::size_t i = 0; i < lv.size(); ++i) total += stable_softplus(lv[i]) - targets[i] * lv[i];
  Node* pl = logits.node();
  std::vector<double> ts(targets.begin(), targets.end());
  const Var parents[] = {logits};
  return logits.tape().emit(Matrix::scalar(total), parents, [pl, ts = std::move(ts)](Node& self) {
    const double g = self.grad()[0];
    Matrix& gx = pl->grad();
    for (std::size_t i = 0; i < ts.size(); ++i)
      gx[i] += g * (stable_sigmoid(pl->value[i]) - ts[i]);
  });
}

}  // namespace damoe::ad
