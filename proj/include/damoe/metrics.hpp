#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "damoe/graph.hpp"
#include "damoe/matrix.hpp"

namespace damoe {

double accuracy(std::span<const int> predicted, std::span<const int> truth);
// Probability that a random positive outranks a random negative, ties
// counted as 1/2. Throws MetricError when either side is empty.
double roc_auc(std::span<const double> positive, std::span<const double> negative);
double rmse(std::span<const double> predicted, std::span<const double> truth);
// Fraction of positives scored strictly above the n-th best negative; 1 when
// there are fewer than n negatives.
double hits_at_n(std::span<const double> positive, std::span<const double> negative, std::size_t n);

// argmax per row, ties to the lower index
std::vector<int> argmax_rows(const Matrix& logits);
// -sum q log q over the entries of a distribution.
double entropy(std::span<const double> distribution);
// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> a, std::span<const double> b);

enum class Metric { accuracy, roc_auc, rmse, hits };
std::string_view to_string(Metric m);
Metric parse_metric(std::string_view s);
Metric default_metric(Task t);
bool higher_is_better(Metric m);

}  // namespace damoe
