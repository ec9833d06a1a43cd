#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "damoe/autodiff.hpp"
#include "damoe/graph.hpp"

namespace damoe {

inline constexpr double kCvEpsilon = 1e-10;

// Var(S) / (mean(S)^2 + eps), population variance.
double coefficient_of_variation_sq(std::span<const double> s);
ad::Var coefficient_of_variation_sq(ad::Var s);

// CV^2 of the per-expert totals of the gate weights over a batch. Each row
// is one gated input; batch_q is batch x s.
double importance_loss(const Matrix& batch_q);
// CV^2 of the per-expert totals of the selection probabilities.
double load_loss(const Matrix& batch_p);

// Tape versions over 1 x s per-input totals (or n x s blocks, summed by row).
ad::Var importance_loss(std::span<const ad::Var> q_rows);
ad::Var load_loss(std::span<const ad::Var> p_rows);

// Supervision attached to one graph.
struct Targets {
  std::vector<int> labels;                  // classification: one per output row
  std::vector<double> values;               // regression / link: one per output row
  std::vector<std::size_t> rows;            // node tasks: output rows that are supervised
  std::vector<std::size_t> pair_u, pair_v;  // link prediction pairs
};

// Sum of per-item losses and the number of items. Classification uses
// softmax cross-entropy, regression squared error, link prediction binary
// cross-entropy of sigmoid(<h_u, h_v>).
struct TaskLossSum {
  ad::Var sum;
  std::size_t count = 0;
};
TaskLossSum task_loss_sum(ad::Var pred, const Targets& t, Task task);
// Mean over items.
ad::Var task_loss(ad::Var pred, const Targets& t, Task task);

// Link scores <h_u, h_v> as a p x 1 column (logits).
ad::Var pair_logits(ad::Var h, std::span<const std::size_t> u, std::span<const std::size_t> v);

struct LossBreakdown {
  double task = 0.0;
  double importance = 0.0;  // L1
  double load = 0.0;        // L2
  double total = 0.0;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

// task + lambda1 * importance + lambda2 * load, kept on the tape.
struct TotalLoss {
  ad::Var total;
  LossBreakdown breakdown;
};
TotalLoss total_loss(ad::Var task, ad::Var importance, ad::Var load, double lambda1, double lambda2);

}  // namespace damoe
