#pragma once

// Reverse-mode automatic differentiation over dense double matrices.
//
// A Tape owns every node created while building an expression. Nodes are
// appended in creation order and backward() walks them in exactly the reverse
// order, so an op's output is always processed before its inputs. Gradients
// accumulate (+=) and are cleared explicitly with zero_grad() or clear().

#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "damoe/matrix.hpp"

namespace damoe::ad {

class Tape;

struct Node {
  Matrix value;
  bool requires_grad = false;
  std::size_t index = 0;
  Tape* tape = nullptr;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  // Lazily allocated so inference-only tapes never pay for it; observably it
  // always has the shape of `value`.
  Matrix& grad();

 private:
  Matrix grad_;
};

// Non-owning handle to a node on a tape.
class Var {
 public:
  Var() = default;
  explicit Var(Node* node) : node_(node) {}

  bool valid() const noexcept { return node_ != nullptr; }
  const Matrix& value() const { return node_->value; }
  const Matrix& grad() const { return node_->grad(); }
  std::size_t rows() const { return node_->value.rows(); }
  std::size_t cols() const { return node_->value.cols(); }
  bool requires_grad() const { return node_->requires_grad; }
  Tape& tape() const { return *node_->tape; }
  Node* node() const noexcept { return node_; }
  // Convenience for 1x1 nodes.
  double item() const;

 private:
  Node* node_ = nullptr;
};

class Tape {
 public:
  // A non-recording tape computes forward values only: no backward closures
  // are stored and every node has requires_grad == false.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value, bool requires_grad = false);
  Var constant(Matrix value) { return leaf(std::move(value), false); }

  // loss must be 1x1. Seeds d(loss)/d(loss) = 1 and propagates to every
  // requires_grad ancestor.
  void backward(Var loss);
  void zero_grad();
  void clear();

  std::size_t size() const noexcept { return nodes_.size(); }
  bool recording() const noexcept { return record_; }

  // Used by op implementations.
  Var emit(Matrix value, std::span<const Var> parents, std::function<void(Node&)> backward_fn);

 private:
  std::deque<Node> nodes_;
  bool record_;
};

// ---- ops -------------------------------------------------------------------
//
// Binary elementwise ops broadcast an operand whose row or column count is 1
// against the other operand's extent.

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var div(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var neg(Var a);

Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var sigmoid(Var a);
// log(1 + exp(x)) evaluated as max(x, 0) + log1p(exp(-|x|)).
Var softplus(Var a);
// Standard normal CDF.
Var normal_cdf(Var a);

Var sum(Var a);        // -> 1x1
Var mean(Var a);       // -> 1x1
Var sum_rows(Var a);   // n x d -> 1 x d, column-wise total over rows
Var mean_rows(Var a);  // n x d -> 1 x d, mean pooling over rows
Var row_sum(Var a);    // n x d -> n x 1
Var row_mean(Var a);   // n x d -> n x 1
Var column(Var a, std::size_t j);  // n x d -> n x 1

// Output row dst_index[i] receives src row i. Indices must be < n_rows.
Var scatter_add_rows(Var src, std::span<const std::size_t> dst_index, std::size_t n_rows);
// Output row i is src row index[i].
Var gather_rows(Var src, std::span<const std::size_t> index);

// Row-wise softmax restricted to entries with mask != 0; other outputs are 0.
// mask is row-major with the logits' shape. Every row needs a set entry.
Var masked_softmax(Var logits, std::span<const std::uint8_t> mask);

// For each row and each column i: the k-th largest entry of the row with
// column i removed. Requires k <= cols - 1. The gradient flows to the entry
// that realized the threshold.
Var kth_largest_excluding(Var scores, std::size_t k);

// Sum over rows of -log softmax(logits)[label].
Var cross_entropy_sum(Var logits, std::span<const int> labels);
// Sum of binary cross-entropy of sigmoid(logit) against targets in {0,1}.
Var bce_with_logits_sum(Var logits, std::span<const double> targets);

}  // namespace damoe::ad
