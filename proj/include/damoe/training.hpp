#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "damoe/damoe.hpp"
#include "damoe/graph.hpp"
#include "damoe/kernels.hpp"
#include "damoe/losses.hpp"
#include "damoe/metrics.hpp"

namespace damoe {

struct TrainConfig {
  Backbone backbone = Backbone::gcn;
  std::size_t experts = 4;  // s
  std::size_t k = 2;
  std::size_t hidden = 64;
  std::size_t gate_hidden = 32;
  double lambda1 = 1e-3;
  double lambda2 = 1e-3;
  double lr = 0.01;
  int epochs = 200;
  std::uint64_t seed = 0;
  Task task = Task::graph_classification;
  std::optional<Readout> readout;  // backbone default when unset
  bool noise = true;
  GatingMode gating = GatingMode::structure;
  std::size_t fixed_depth = 0;  // > 0: plain GNN baseline of that depth
  double train_fraction = 0.8;
  std::optional<Metric> metric;  // task default when unset
  std::size_t hits_n = 10;

  // Throws ConfigError naming the offending field.
  void validate() const;
  Readout effective_readout() const { return readout.value_or(default_readout(backbone)); }
  Metric effective_metric() const { return metric.value_or(default_metric(task)); }
  ModelSpec model_spec(std::size_t in_dim, std::size_t num_classes) const;
};

// Examples for training and evaluation with the graphs and constants they
// point into. Move-only so the pointers stay valid.
struct PreparedTask {
  Task task = Task::graph_classification;
  std::size_t in_dim = 0;
  std::size_t num_classes = 0;
  std::vector<Graph> graphs;
  std::vector<GraphContext> contexts;
  std::vector<Example> train, test;

  PreparedTask() = default;
  PreparedTask(PreparedTask&&) = default;
  PreparedTask& operator=(PreparedTask&&) = default;
  PreparedTask(const PreparedTask&) = delete;
  PreparedTask& operator=(const PreparedTask&) = delete;
};

// Graph-level tasks with an explicit split.
PreparedTask prepare_task(const TrainConfig& cfg, const GraphDataset& train, const GraphDataset& test);
// Splits according to the task: graphs for graph-level tasks (seeded,
// stratified), nodes for node classification, held-out edges for link
// prediction (single-graph datasets).
PreparedTask prepare_task(const TrainConfig& cfg, const GraphDataset& full);

struct BucketReport {
  std::size_t count = 0;
  double metric = 0.0;     // NaN when undefined for the bucket
  std::vector<double> mean_q;  // mean gate weight per expert
  double mean_depth = 0.0;     // mean of sum_i Q_i * depth_i
};

struct EpochLog {
  int epoch = 0;
  LossBreakdown loss;
  double train_metric = 0.0;
  double test_metric = 0.0;
};

struct EvalReport {
  Metric metric = Metric::accuracy;
  double value = 0.0;
  std::array<BucketReport, 3> buckets;  // small, medium, large; graph-level tasks only
  std::vector<double> mean_q;           // over every gated row
  double utilization_entropy = 0.0;     // entropy of mean_q
  std::size_t evaluated = 0;            // examples
  std::size_t executed_forwards = 0;    // expert forward passes
  std::vector<EpochLog> log;
};

double compute_metric(std::span<const ExampleOutput> outputs, std::span<const Example> examples,
                      Task task, Metric metric, std::size_t hits_n);

EvalReport evaluate(const DaMoeModel& model, std::span<const Example> examples, Task task,
                    Metric metric, std::size_t hits_n = 10);

struct TrainResult {
  DaMoeModel model;
  EvalReport report;
  double seconds_per_epoch = 0.0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

// Full-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8). Throws TrainingError
// when the loss becomes non-finite.
TrainResult train(const TrainConfig& cfg, const PreparedTask& data, const EpochCallback& on_epoch = {});
TrainResult train(const TrainConfig& cfg, const GraphDataset& full, const EpochCallback& on_epoch = {});

class Adam {
 public:
  Adam(const ParameterStore& params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step(ParameterStore& params, std::span<const Matrix> grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  std::vector<Matrix> m_, v_;
};

}  // namespace damoe
