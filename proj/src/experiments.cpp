#include "damoe/experiments.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "damoe/errors.hpp"

namespace damoe {

namespace {

std::ofstream open_csv(const std::filesystem::path& file) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out.precision(10);
  return out;
}

CellResult run_cell(const std::string& model, const TrainConfig& cfg, const GraphDataset& dataset) {
  CellResult cell;
  cell.model = model;
  cell.seed = cfg.seed;
  cell.config = cfg;
  cfg.validate();
  const PreparedTask data = prepare_task(cfg, dataset);
  TrainResult tr = train(cfg, data);
  cell.report = std::move(tr.report);
  cell.seconds_per_epoch = tr.seconds_per_epoch;
  if (tr.model.is_mixture() && is_graph_level(cfg.task)) {
    std::vector<ExampleOutput> outs = infer_serial(tr.model, data.test);
    for (std::size_t i = 0; i < outs.size(); ++i) {
      cell.test_graph_ids.push_back(data.test[i].graph->id);
      cell.test_graph_sizes.push_back(data.test[i].graph->n);
      cell.test_gating.push_back(std::move(*outs[i].gating));
    }
  }
  return cell;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::vector<CellResult> run_cells(const std::vector<std::pair<std::string, TrainConfig>>& cells,
                                  const GraphDataset& dataset, bool parallel) {
  std::vector<CellResult> results(cells.size());
  std::vector<std::exception_ptr> errors(cells.size());
  const auto n = static_cast<long>(cells.size());
#pragma omp parallel for schedule(dynamic) num_threads(worker_threads()) if (parallel)
  for (long i = 0; i < n; ++i) {
    const auto u = static_cast<std::size_t>(i);
    try {
      results[u] = run_cell(cells[u].first, cells[u].second, dataset);
    } catch (...) {
      errors[u] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  return results;
}

void write_gating_trace_csv(const std::filesystem::path& file, const std::vector<CellResult>& cells) {
  std::ofstream out = open_csv(file);
  out << "model,seed,graph_id,n_nodes,expert_id,Q_value,selected_flag\n";
  for (const CellResult& c : cells) {
    for (std::size_t g = 0; g < c.test_gating.size(); ++g) {
      const GatingOutput& go = c.test_gating[g];
      for (std::size_t e = 0; e < go.weights.cols(); ++e) {
        bool selected = false;
        for (std::size_t sel : go.selected[0]) selected = selected || sel == e;
        out << c.model << ',' << c.seed << ',' << c.test_graph_ids[g] << ','
            << c.test_graph_sizes[g] << ',' << e << ',' << go.weights(0, e) << ','
            << (selected ? 1 : 0) << '\n';
      }
    }
  }
}

DepthSensitivityResult run_depth_sensitivity(const TrainConfig& config, const GraphDataset& dataset,
                                             const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (!is_graph_level(config.task))
    throw ConfigError("task: depth sensitivity needs a graph-level task");
  const std::size_t s = config.experts;
  std::vector<std::pair<std::string, TrainConfig>> cells;
  for (std::size_t depth = 1; depth <= s + 1; ++depth) {
    for (std::uint64_t seed : seeds) {
      TrainConfig c = config;
      c.seed = seed;
      c.fixed_depth = depth <= s ? depth : 0;
      cells.emplace_back(depth <= s ? "depth-" + std::to_string(depth) : "da-moe", c);
    }
  }

  DepthSensitivityResult r;
  r.seeds = seeds;
  r.cells = run_cells(cells, dataset);

  for (auto& h : r.heatmap) h.assign(s, 0.0);
  std::array<std::size_t, 3> mixture_counts{};
  for (std::size_t depth = 1; depth <= s + 1; ++depth) {
    DepthSensitivityRow row;
    row.model = cells[(depth - 1) * seeds.size()].first;
    row.depth = depth <= s ? depth : 0;
    std::array<double, 3> weighted{};
    std::array<std::size_t, 3> counts{};
    std::vector<double> overall;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const EvalReport& rep = r.cells[(depth - 1) * seeds.size() + si].report;
      overall.push_back(rep.value);
      for (std::size_t b = 0; b < 3; ++b) {
        const BucketReport& br = rep.buckets[b];
        if (br.count == 0 || std::isnan(br.metric)) continue;
        weighted[b] += br.metric * static_cast<double>(br.count);
        counts[b] += br.count;
        if (row.depth == 0) {
          for (std::size_t e = 0; e < s; ++e)
            r.heatmap[b][e] += br.mean_q[e] * static_cast<double>(br.count);
          r.mean_depth[b] += br.mean_depth * static_cast<double>(br.count);
          mixture_counts[b] += br.count;
        }
      }
    }
    for (std::size_t b = 0; b < 3; ++b)
      row.bucket_metric[b] = counts[b] > 0 ? weighted[b] / static_cast<double>(counts[b])
                                           : std::numeric_limits<double>::quiet_NaN();
    row.metric = mean_of(overall);
    if (row.depth == 0) r.bucket_counts = counts;
    r.rows.push_back(row);
  }
  for (std::size_t b = 0; b < 3; ++b) {
    const auto c = static_cast<double>(mixture_counts[b]);
    for (double& v : r.heatmap[b]) v = c > 0 ? v / c : std::numeric_limits<double>::quiet_NaN();
    r.mean_depth[b] = c > 0 ? r.mean_depth[b] / c : std::numeric_limits<double>::quiet_NaN();
  }

  const bool higher = higher_is_better(config.effective_metric());
  for (std::size_t b = 0; b < 3; ++b) {
    std::size_t best = 0;
    for (std::size_t d = 0; d < s; ++d) {
      const double v = r.rows[d].bucket_metric[b];
      if (std::isnan(v)) continue;
      if (best == 0) {
        best = d + 1;
        continue;
      }
      const double cur = r.rows[best - 1].bucket_metric[b];
      if (higher ? v > cur : v < cur) best = d + 1;
    }
    r.best_fixed_depth[b] = best;
  }
  return r;
}

void DepthSensitivityResult::write_table_csv(const std::filesystem::path& file) const {
  std::ofstream out = open_csv(file);
  out << "model,depth,small,medium,large,overall\n";
  for (const auto& row : rows) {
    out << row.model << ',' << row.depth;
    for (double v : row.bucket_metric) out << ',' << v;
    out << ',' << row.metric << '\n';
  }
}

void DepthSensitivityResult::write_heatmap_csv(const std::filesystem::path& file) const {
  std::ofstream out = open_csv(file);
  out << "bucket";
  const std::size_t s = heatmap[0].size();
  for (std::size_t e = 0; e < s; ++e) out << ",expert_" << e;
  out << ",mean_depth\n";
  for (std::size_t b = 0; b < 3; ++b) {
    out << to_string(kAllBuckets[b]);
    for (double v : heatmap[b]) out << ',' << v;
    out << ',' << mean_depth[b] << '\n';
  }
}

LambdaSweepResult run_lambda_sweep(const TrainConfig& config, const GraphDataset& dataset,
                                   const std::vector<double>& lambdas,
                                   const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (lambdas.empty()) throw ConfigError("lambdas: at least one value is required");
  std::vector<std::pair<std::string, TrainConfig>> cells;
  for (double lambda : lambdas) {
    if (!(lambda >= 0.0) || !std::isfinite(lambda))
      throw ConfigError("lambdas: values must be finite and non-negative");
    for (std::uint64_t seed : seeds) {
      TrainConfig c = config;
      c.seed = seed;
      c.fixed_depth = 0;
      c.lambda1 = c.lambda2 = lambda;
      cells.emplace_back("lambda", c);
    }
  }
  const std::vector<CellResult> results = run_cells(cells, dataset);
  LambdaSweepResult r;
  r.seeds = seeds;
  for (std::size_t li = 0; li < lambdas.size(); ++li) {
    LambdaSweepRow row;
    row.lambda = lambdas[li];
    std::vector<double> ent;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const EvalReport& rep = results[li * seeds.size() + si].report;
      row.per_seed.push_back(rep.value);
      ent.push_back(rep.utilization_entropy);
    }
    row.metric = mean_of(row.per_seed);
    row.entropy = mean_of(ent);
    r.rows.push_back(std::move(row));
  }
  return r;
}

void LambdaSweepResult::write_csv(const std::filesystem::path& file) const {
  std::ofstream out = open_csv(file);
  out << "lambda,metric,entropy";
  for (std::uint64_t seed : seeds) out << ",seed_" << seed;
  out << '\n';
  for (const auto& row : rows) {
    out << row.lambda << ',' << row.metric << ',' << row.entropy;
    for (double v : row.per_seed) out << ',' << v;
    out << '\n';
  }
}

SparseDenseResult run_sparse_vs_dense(const TrainConfig& config, const GraphDataset& dataset,
                                      const std::vector<std::uint64_t>& seeds,
                                      std::size_t sparse_k) {
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  if (sparse_k == 0 || sparse_k > config.experts)
    throw ConfigError("k: sparse k must be in [1, experts]");
  SparseDenseResult r;
  r.seeds = seeds;
  for (const std::size_t k : {config.experts, sparse_k}) {
    std::vector<std::pair<std::string, TrainConfig>> cells;
    for (std::uint64_t seed : seeds) {
      TrainConfig c = config;
      c.seed = seed;
      c.fixed_depth = 0;
      c.k = k;
      cells.emplace_back(k == config.experts ? "dense" : "sparse", c);
    }
    const std::vector<CellResult> results = run_cells(cells, dataset, false);
    SparseDenseRow row;
    row.variant = cells.front().first;
    row.k = k;
    std::vector<double> metric, forwards, secs;
    for (const CellResult& c : results) {
      metric.push_back(c.report.value);
      forwards.push_back(static_cast<double>(c.report.executed_forwards) /
                         static_cast<double>(std::max<std::size_t>(c.report.evaluated, 1)));
      secs.push_back(c.seconds_per_epoch);
    }
    row.metric = mean_of(metric);
    row.forwards_per_graph = mean_of(forwards);
    row.seconds_per_epoch = mean_of(secs);
    r.rows.push_back(row);
  }
  return r;
}

void SparseDenseResult::write_csv(const std::filesystem::path& file) const {
  std::ofstream out = open_csv(file);
  out << "variant,k,metric,forwards_per_graph,seconds_per_epoch\n";
  for (const auto& row : rows)
    out << row.variant << ',' << row.k << ',' << row.metric << ',' << row.forwards_per_graph << ','
        << row.seconds_per_epoch << '\n';
}

GatingAblationResult run_gating_ablation(const TrainConfig& config, const GraphDataset& dataset,
                                         const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("seeds: at least one seed is required");
  GatingAblationResult r;
  r.seeds = seeds;
  r.structure_config = r.linear_config = config;
  r.structure_config.fixed_depth = r.linear_config.fixed_depth = 0;
  r.structure_config.gating = GatingMode::structure;
  r.linear_config.gating = GatingMode::linear;
  std::vector<std::pair<std::string, TrainConfig>> cells;
  for (const TrainConfig* base : {&r.structure_config, &r.linear_config}) {
    for (std::uint64_t seed : seeds) {
      TrainConfig c = *base;
      c.seed = seed;
      cells.emplace_back(std::string(to_string(c.gating)), c);
    }
  }
  const std::vector<CellResult> results = run_cells(cells, dataset);
  for (const CellResult& c : results) r.rows.push_back({c.config.gating, c.seed, c.report.value});
  return r;
}

double GatingAblationResult::mean(GatingMode mode) const {
  std::vector<double> v;
  for (const auto& row : rows)
    if (row.mode == mode) v.push_back(row.metric);
  return mean_of(v);
}

void GatingAblationResult::write_csv(const std::filesystem::path& file) const {
  std::ofstream out = open_csv(file);
  out << "gating,seed,metric\n";
  for (const auto& row : rows) out << to_string(row.mode) << ',' << row.seed << ',' << row.metric << '\n';
}

}  // namespace damoe
