#include "damoe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "damoe/errors.hpp"

namespace damoe {

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw DimensionError("accuracy: length mismatch");
  if (truth.empty()) throw MetricError("accuracy of an empty set");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

namespace {

// 1-based ranks, ties share their average rank.
std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = r;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double roc_auc(std::span<const double> positive, std::span<const double> negative) {
  if (positive.empty() || negative.empty())
    throw MetricError("ROC-AUC is undefined when only one class is present");
  std::vector<double> all(positive.begin(), positive.end());
  all.insert(all.end(), negative.begin(), negative.end());
  const auto rank = average_ranks(all);
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < positive.size(); ++i) pos_rank_sum += rank[i];
  const double p = static_cast<double>(positive.size());
  const double n = static_cast<double>(negative.size());
  // Mann-Whitney U: pairs won by positives, ties counting one half
  const double u = pos_rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * n);
}

double rmse(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw DimensionError("rmse: length mismatch");
  if (truth.empty()) throw MetricError("rmse of an empty set");
  double s = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) s += (predicted[i] - truth[i]) * (predicted[i] - truth[i]);
  return std::sqrt(s / static_cast<double>(truth.size()));
}

double hits_at_n(std::span<const double> positive, std::span<const double> negative, std::size_t n) {
  if (positive.empty()) throw MetricError("HITS@N without positive pairs");
  if (n == 0) throw ArgumentError("HITS@N needs n >= 1");
  if (negative.size() < n) return 1.0;
  std::vector<double> neg(negative.begin(), negative.end());
  std::nth_element(neg.begin(), neg.begin() + static_cast<long>(n - 1), neg.end(), std::greater<>());
  const double threshold = neg[n - 1];
  std::size_t hit = 0;
  for (double p : positive) hit += p > threshold;
  return static_cast<double>(hit) / static_cast<double>(positive.size());
}

std::vector<int> argmax_rows(const Matrix& logits) {
  std::vector<int> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    out[r] = static_cast<int>(best);
  }
  return out;
}

double entropy(std::span<const double> distribution) {
  double h = 0.0;
  for (double q : distribution)
    if (q > 0.0) h -= q * std::log(q);
  return h;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw MetricError("spearman: need two equal-length samples");
  const auto ra = average_ranks(a), rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    cov += (ra[i] - ma) * (rb[i] - mb);
    va += (ra[i] - ma) * (ra[i] - ma);
    vb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (va == 0.0 || vb == 0.0) return 0.0;
  return cov / std::sqrt(va * vb);
}

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::accuracy: return "accuracy";
    case Metric::roc_auc: return "roc-auc";
    case Metric::rmse: return "rmse";
    case Metric::hits: return "hits";
  }
  return "?";
}

Metric parse_metric(std::string_view s) {
  for (Metric m : {Metric::accuracy, Metric::roc_auc, Metric::rmse, Metric::hits})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown metric '" + std::string(s) + "' (expected accuracy, roc-auc, rmse or hits)");
}

Metric default_metric(Task t) {
  switch (t) {
    case Task::graph_classification:
    case Task::node_classification: return Metric::accuracy;
    case Task::graph_regression: return Metric::rmse;
    case Task::link_prediction: return Metric::hits;
  }
  return Metric::accuracy;
}

bool higher_is_better(Metric m) { return m != Metric::rmse; }

}  // namespace damoe
