// damoe: train, run experiments, and generate synthetic data.
//
// Exit codes: 0 success, 1 unexpected failure, 2 bad arguments, config or
// input files, 3 training divergence.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "damoe/errors.hpp"
#include "damoe/experiments.hpp"
#include "damoe/graph.hpp"
#include "damoe/io.hpp"
#include "damoe/training.hpp"

namespace fs = std::filesystem;
using namespace damoe;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;
constexpr int kExitDiverged = 3;

const std::vector<std::string> kExperiments{"depth-sensitivity", "lambda-sweep", "sparse-dense",
                                            "gating-ablation"};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> experts, topk;
  std::optional<std::string> backbone, gating, task;

  void add_to(CLI::App* app) {
    app->add_option("--seed", seed, "Random seed");
    app->add_option("--experts", experts, "Number of experts s");
    app->add_option("--topk", topk, "Experts selected per input k");
    app->add_option("--backbone", backbone, "gcn or gin");
    app->add_option("--gating", gating, "structure or linear");
    app->add_option("--task", task,
                    "graph-classification, graph-regression, node-classification or link-prediction");
  }

  void apply(TrainConfig& c) const {
    try {
      if (seed) c.seed = *seed;
      if (experts) c.experts = *experts;
      if (topk) c.k = *topk;
      if (backbone) c.backbone = parse_backbone(*backbone);
      if (gating) c.gating = parse_gating_mode(*gating);
      if (task) c.task = parse_task(*task);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    c.validate();
  }
};

// The dataset name is the prefix of the single *_A.txt file in dir.
std::string infer_dataset_name(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("data directory not found: " + dir.string());
  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string f = entry.path().filename().string();
    if (f.size() > 6 && f.ends_with("_A.txt")) names.push_back(f.substr(0, f.size() - 6));
  }
  if (names.empty()) throw IoError("no *_A.txt file in " + dir.string());
  if (names.size() > 1) throw IoError("several datasets in " + dir.string() + "; keep one per directory");
  return names.front();
}

GraphDataset load_data(const fs::path& dir, Task task) {
  LoadOptions opts;
  opts.task = task;
  return load_tu_dataset(dir, infer_dataset_name(dir), opts);
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

std::vector<std::uint64_t> parse_seeds(const std::string& list) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const auto v = std::stoull(item, &pos);
      if (pos != item.size() || item.starts_with('-')) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("seeds: not a non-negative integer: '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("seeds: empty list");
  return out;
}

std::vector<double> parse_lambdas(const std::string& list) {
  std::vector<double> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const double v = std::stod(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError("lambdas: not a number: '" + item + "'");
    }
  }
  if (out.empty()) throw ConfigError("lambdas: empty list");
  return out;
}

TrainConfig base_config(const std::string& config_path, const Overrides& o) {
  TrainConfig c = config_path.empty() ? TrainConfig{} : load_config(config_path);
  o.apply(c);
  return c;
}

int cmd_train(const std::string& config_path, const fs::path& data, const fs::path& out,
              const Overrides& o) {
  const TrainConfig cfg = base_config(config_path, o);
  const GraphDataset ds = load_data(data, cfg.task);
  fs::create_directories(out);

  RunManifest manifest;
  manifest.config = cfg;
  manifest.dataset = ds.name;
  manifest.dataset_fingerprint = hex64(dataset_fingerprint(ds));
  manifest.seeds = {cfg.seed};
  manifest.artifacts = {"manifest.json", "log.csv", "report.json", "model.json"};
  write_json(out / "manifest.json", manifest.to_json());

  const TrainResult r = train(cfg, ds, [](const EpochLog& e) {
    if (e.epoch == 1 || e.epoch % 20 == 0)
      std::cerr << "epoch " << e.epoch << " loss " << e.loss.total << " train " << e.train_metric
                << " test " << e.test_metric << '\n';
  });
  write_log_csv(out / "log.csv", r.report.log);
  write_json(out / "report.json", report_to_json(r.report, cfg, ds.name, utc_timestamp()));
  write_json(out / "model.json", checkpoint_to_json(r.model, cfg));
  std::cout << to_string(r.report.metric) << ' ' << r.report.value << '\n';
  return kExitOk;
}

int cmd_experiment(const std::string& name, const std::string& config_path, const fs::path& data,
                   const fs::path& out, const std::string& seeds_arg,
                   const std::string& lambdas_arg, const Overrides& o) {
  if (std::find(kExperiments.begin(), kExperiments.end(), name) == kExperiments.end()) {
    std::cerr << "unknown experiment '" << name << "'; valid names:";
    for (const auto& n : kExperiments) std::cerr << ' ' << n;
    std::cerr << '\n';
    return kExitUsage;
  }
  const TrainConfig cfg = base_config(config_path, o);
  const std::vector<std::uint64_t> seeds = parse_seeds(seeds_arg);
  const std::vector<double> lambdas = parse_lambdas(lambdas_arg);
  const GraphDataset ds = load_data(data, cfg.task);
  fs::create_directories(out);

  RunManifest manifest;
  manifest.config = cfg;
  manifest.dataset = ds.name;
  manifest.dataset_fingerprint = hex64(dataset_fingerprint(ds));
  manifest.seeds = seeds;
  if (name == "depth-sensitivity")
    manifest.artifacts = {"depth_sensitivity.csv", "heatmap.csv", "gating_trace.csv"};
  else if (name == "lambda-sweep")
    manifest.artifacts = {"lambda_sweep.csv"};
  else if (name == "sparse-dense")
    manifest.artifacts = {"sparse_dense.csv"};
  else
    manifest.artifacts = {"gating_ablation.csv"};
  manifest.artifacts.insert(manifest.artifacts.begin(), "manifest.json");
  write_json(out / "manifest.json", manifest.to_json());

  if (name == "depth-sensitivity") {
    const DepthSensitivityResult r = run_depth_sensitivity(cfg, ds, seeds);
    r.write_table_csv(out / "depth_sensitivity.csv");
    r.write_heatmap_csv(out / "heatmap.csv");
    write_gating_trace_csv(out / "gating_trace.csv", r.cells);
    for (const auto& row : r.rows)
      std::cout << row.model << ' ' << row.bucket_metric[0] << ' ' << row.bucket_metric[1] << ' '
                << row.bucket_metric[2] << '\n';
  } else if (name == "lambda-sweep") {
    const LambdaSweepResult r = run_lambda_sweep(cfg, ds, lambdas, seeds);
    r.write_csv(out / "lambda_sweep.csv");
    for (const auto& row : r.rows) std::cout << row.lambda << ' ' << row.metric << '\n';
  } else if (name == "sparse-dense") {
    const SparseDenseResult r = run_sparse_vs_dense(cfg, ds, seeds);
    r.write_csv(out / "sparse_dense.csv");
    for (const auto& row : r.rows)
      std::cout << row.variant << ' ' << row.metric << ' ' << row.seconds_per_epoch << '\n';
  } else {
    const GatingAblationResult r = run_gating_ablation(cfg, ds, seeds);
    r.write_csv(out / "gating_ablation.csv");
    std::cout << "structure " << r.mean(GatingMode::structure) << "\nlinear "
              << r.mean(GatingMode::linear) << '\n';
  }
  return kExitOk;
}

int cmd_gen_data(const fs::path& out, std::size_t count, std::uint64_t seed,
                 std::size_t features, int max_hops) {
  const GraphDataset ds = generate_depth_sensitive_dataset(count, seed, features, max_hops);
  fs::create_directories(out);
  write_tu_dataset(ds, out);
  std::cout << ds.graphs.size() << " graphs written to " << out.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth-adaptive mixture of GNN experts"};
  app.require_subcommand(1);

  std::string config_path, seeds_arg = "0,1,2,3,4", lambdas_arg = "0,0.0001,0.001,0.01,0.1";
  std::string experiment_name;
  fs::path data, out;
  Overrides overrides;

  CLI::App* train_cmd = app.add_subcommand("train", "Train one model and write its artifacts");
  train_cmd->add_option("--config", config_path, "JSON training config")->required();
  train_cmd->add_option("--data", data, "Directory with one TU-format dataset")->required();
  train_cmd->add_option("--out", out, "Output directory")->required();
  overrides.add_to(train_cmd);

  CLI::App* exp_cmd = app.add_subcommand("experiment", "Run an experiment over several seeds");
  exp_cmd->add_option("name", experiment_name,
                      "depth-sensitivity, lambda-sweep, sparse-dense or gating-ablation")
      ->required();
  exp_cmd->add_option("--config", config_path, "JSON training config (defaults otherwise)");
  exp_cmd->add_option("--data", data, "Directory with one TU-format dataset")->required();
  exp_cmd->add_option("--out", out, "Output directory")->required();
  exp_cmd->add_option("--seeds", seeds_arg, "Comma-separated seed list")->capture_default_str();
  exp_cmd->add_option("--lambdas", lambdas_arg, "Comma-separated lambda list (lambda-sweep)")
      ->capture_default_str();
  overrides.add_to(exp_cmd);

  std::size_t count = 200, features = 1;
  std::uint64_t gen_seed = 0;
  int max_hops = 8;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic depth-sensitive dataset");
  gen_cmd->add_option("--out", out, "Output directory")->required();
  gen_cmd->add_option("--count", count, "Number of graphs")->capture_default_str();
  gen_cmd->add_option("--seed", gen_seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--features", features, "Feature columns")->capture_default_str();
  gen_cmd->add_option("--max-hops", max_hops, "Largest label radius")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(config_path, data, out, overrides);
    if (*exp_cmd)
      return cmd_experiment(experiment_name, config_path, data, out, seeds_arg, lambdas_arg,
                            overrides);
    if (*gen_cmd) return cmd_gen_data(out, count, gen_seed, features, max_hops);
  } catch (const TrainingError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kExitDiverged;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
