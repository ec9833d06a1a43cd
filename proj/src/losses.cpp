#include "damoe/losses.hpp"

#include "damoe/errors.hpp"

namespace damoe {

double coefficient_of_variation_sq(std::span<const double> s) {
  if (s.empty()) throw ArgumentError("coefficient_of_variation_sq: empty vector");
  const double n = static_cast<double>(s.size());
  double mu = 0.0;
  for (double v : s) mu += v;
  mu /= n;
  double var = 0.0;
  for (double v : s) var += (v - mu) * (v - mu);
  var /= n;
  return var / (mu * mu + kCvEpsilon);
}

ad::Var coefficient_of_variation_sq(ad::Var s) {
  if (s.value().empty()) throw ArgumentError("coefficient_of_variation_sq: empty vector");
  ad::Var mu = ad::mean(s);
  ad::Var centered = ad::sub(s, mu);
  ad::Var var = ad::mean(ad::mul(centered, centered));
  return ad::div(var, ad::add_scalar(ad::mul(mu, mu), kCvEpsilon));
}

namespace {

std::vector<double> column_totals(const Matrix& m) {
  if (m.rows() == 0) throw ArgumentError("balancing loss: empty batch");
  std::vector<double> t(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t[c] += m(r, c);
  return t;
}

ad::Var batch_totals(std::span<const ad::Var> rows) {
  if (rows.empty()) throw ArgumentError("balancing loss: empty batch");
  ad::Var total;
  for (ad::Var r : rows) {
    ad::Var t = r.rows() == 1 ? r : ad::sum_rows(r);
    total = total.valid() ? ad::add(total, t) : t;
  }
  return total;
}

}  // namespace

double importance_loss(const Matrix& batch_q) { return coefficient_of_variation_sq(column_totals(batch_q)); }
double load_loss(const Matrix& batch_p) { return coefficient_of_variation_sq(column_totals(batch_p)); }

ad::Var importance_loss(std::span<const ad::Var> q_rows) {
  return coefficient_of_variation_sq(batch_totals(q_rows));
}
ad::Var load_loss(std::span<const ad::Var> p_rows) {
  return coefficient_of_variation_sq(batch_totals(p_rows));
}

ad::Var pair_logits(ad::Var h, std::span<const std::size_t> u, std::span<const std::size_t> v) {
  if (u.size() != v.size()) throw DimensionError("pair_logits: endpoint lists differ in length");
  return ad::row_sum(ad::mul(ad::gather_rows(h, u), ad::gather_rows(h, v)));
}

TaskLossSum task_loss_sum(ad::Var pred, const Targets& t, Task task) {
  switch (task) {
    case Task::graph_classification:
      return {ad::cross_entropy_sum(pred, t.labels), t.labels.size()};
    case Task::node_classification: {
      if (t.rows.size() != t.labels.size())
        throw DimensionError("node task: " + std::to_string(t.labels.size()) + " labels for " +
                             std::to_string(t.rows.size()) + " rows");
      return {ad::cross_entropy_sum(ad::gather_rows(pred, t.rows), t.labels), t.labels.size()};
    }
    case Task::graph_regression: {
      if (pred.value().size() != t.values.size())
        throw DimensionError("regression: " + std::to_string(t.values.size()) +
                             " targets for prediction " + pred.value().shape_string());
      Matrix y(pred.rows(), pred.cols());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = t.values[i];
      ad::Var diff = ad::sub(pred, pred.tape().constant(std::move(y)));
      return {ad::sum(ad::mul(diff, diff)), t.values.size()};
    }
    case Task::link_prediction:
      return {ad::bce_with_logits_sum(pair_logits(pred, t.pair_u, t.pair_v), t.values),
              t.values.size()};
  }
  throw ArgumentError("unknown task");
}

ad::Var task_loss(ad::Var pred, const Targets& t, Task task) {
  TaskLossSum s = task_loss_sum(pred, t, task);
  if (s.count == 0) throw ArgumentError("task_loss: no supervised items");
  return ad::scale(s.sum, 1.0 / static_cast<double>(s.count));
}

TotalLoss total_loss(ad::Var task, ad::Var importance, ad::Var load, double lambda1, double lambda2) {
  TotalLoss out;
  out.total = task;
  if (lambda1 != 0.0) out.total = ad::add(out.total, ad::scale(importance, lambda1));
  if (lambda2 != 0.0) out.total = ad::add(out.total, ad::scale(load, lambda2));
  out.breakdown.task = task.item();
  out.breakdown.importance = importance.item();
  out.breakdown.load = load.item();
  out.breakdown.lambda1 = lambda1;
  out.breakdown.lambda2 = lambda2;
  out.breakdown.total = out.total.item();
  return out;
}

}  // namespace damoe
