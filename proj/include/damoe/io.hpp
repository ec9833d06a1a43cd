#pragma once

// JSON and CSV artifacts: configs, reports, training logs, checkpoints and
// run manifests.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "damoe/training.hpp"

namespace damoe {

inline constexpr const char* kToolVersion = "0.3.0";

// Unknown keys and wrongly typed values raise ConfigError naming the field.
// The result is validated.
TrainConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const TrainConfig& cfg);
// IoError when the file is missing or unreadable, ConfigError otherwise.
TrainConfig load_config(const std::filesystem::path& file);

// The timestamp is kept in a single top-level "timestamp" field.
nlohmann::json report_to_json(const EvalReport& report, const TrainConfig& cfg,
                              const std::string& dataset, const std::string& timestamp);

// epoch, task_loss, L1, L2, total, train_metric, test_metric
void write_log_csv(const std::filesystem::path& file, const std::vector<EpochLog>& log);

// Config echo, model dimensions and every parameter keyed by name.
nlohmann::json checkpoint_to_json(const DaMoeModel& model, const TrainConfig& cfg);
DaMoeModel model_from_checkpoint(const nlohmann::json& j);

struct RunManifest {
  TrainConfig config;
  std::string dataset;
  std::string dataset_fingerprint;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> artifacts;
  std::string tool_version = kToolVersion;

  nlohmann::json to_json() const;
};

// Dumps with two-space indentation and a trailing newline.
void write_json(const std::filesystem::path& file, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& file);

std::string utc_timestamp();

}  // namespace damoe
