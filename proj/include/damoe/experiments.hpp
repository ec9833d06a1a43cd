#pragma once

// Experiment runners. Every (configuration, seed) cell trains on its own
// seeded split of the dataset; models compared within one experiment see
// identical splits and seeds. Independent cells run in parallel.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "damoe/graph.hpp"
#include "damoe/training.hpp"

namespace damoe {

struct CellResult {
  std::string model;
  std::uint64_t seed = 0;
  TrainConfig config;
  EvalReport report;
  double seconds_per_epoch = 0.0;
  // Gate trace of the test graphs (mixture models only).
  std::vector<std::size_t> test_graph_ids, test_graph_sizes;
  std::vector<GatingOutput> test_gating;
};

// Trains every config on split_dataset(dataset, config.train_fraction,
// config.seed). `parallel` runs cells concurrently.
std::vector<CellResult> run_cells(const std::vector<std::pair<std::string, TrainConfig>>& cells,
                                  const GraphDataset& dataset, bool parallel = true);

// Rows of (graph_id, n_nodes, expert_id, Q_value, selected_flag).
void write_gating_trace_csv(const std::filesystem::path& file, const std::vector<CellResult>& cells);

struct DepthSensitivityRow {
  std::string model;
  std::size_t depth = 0;  // 0 for the mixture
  std::array<double, 3> bucket_metric{};  // pooled over seeds, weighted by bucket size
  double metric = 0.0;                    // mean over seeds
};

struct DepthSensitivityResult {
  std::vector<std::uint64_t> seeds;
  std::vector<DepthSensitivityRow> rows;  // depths 1..s, then the mixture
  std::array<std::size_t, 3> bucket_counts{};
  // Mixture only, pooled over seeds: mean Q per expert, and mean
  // Q-weighted expert depth, per bucket.
  std::array<std::vector<double>, 3> heatmap;
  std::array<double, 3> mean_depth{};
  // Smallest fixed depth reaching the best bucket metric.
  std::array<std::size_t, 3> best_fixed_depth{};
  std::vector<CellResult> cells;

  void write_table_csv(const std::filesystem::path& file) const;
  void write_heatmap_csv(const std::filesystem::path& file) const;
};

DepthSensitivityResult run_depth_sensitivity(const TrainConfig& config, const GraphDataset& dataset,
                                             const std::vector<std::uint64_t>& seeds);

struct LambdaSweepRow {
  double lambda = 0.0;
  double metric = 0.0;  // mean over seeds
  double entropy = 0.0;  // mean utilization entropy
  std::vector<double> per_seed;
};

struct LambdaSweepResult {
  std::vector<std::uint64_t> seeds;
  std::vector<LambdaSweepRow> rows;
  void write_csv(const std::filesystem::path& file) const;
};

// lambda1 = lambda2 = lambda for each entry.
LambdaSweepResult run_lambda_sweep(const TrainConfig& config, const GraphDataset& dataset,
                                   const std::vector<double>& lambdas,
                                   const std::vector<std::uint64_t>& seeds);

struct SparseDenseRow {
  std::string variant;  // "dense" or "sparse"
  std::size_t k = 0;
  double metric = 0.0;
  double forwards_per_graph = 0.0;
  double seconds_per_epoch = 0.0;
};

struct SparseDenseResult {
  std::vector<std::uint64_t> seeds;
  std::vector<SparseDenseRow> rows;  // dense, sparse
  void write_csv(const std::filesystem::path& file) const;
};

// Dense uses k = s; sparse uses sparse_k (default 2). Cells run one at a
// time so the per-epoch timings are comparable.
SparseDenseResult run_sparse_vs_dense(const TrainConfig& config, const GraphDataset& dataset,
                                      const std::vector<std::uint64_t>& seeds,
                                      std::size_t sparse_k = 2);

struct GatingAblationRow {
  GatingMode mode = GatingMode::structure;
  std::uint64_t seed = 0;
  double metric = 0.0;
};

struct GatingAblationResult {
  std::vector<std::uint64_t> seeds;
  std::vector<GatingAblationRow> rows;  // every mode x seed
  TrainConfig structure_config, linear_config;
  double mean(GatingMode mode) const;
  void write_csv(const std::filesystem::path& file) const;
};

GatingAblationResult run_gating_ablation(const TrainConfig& config, const GraphDataset& dataset,
                                         const std::vector<std::uint64_t>& seeds);

}  // namespace damoe
