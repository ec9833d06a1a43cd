#include "damoe/io.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "damoe/errors.hpp"

namespace damoe {

using nlohmann::json;

namespace {

const std::set<std::string>& config_keys() {
  static const std::set<std::string> keys{
      "backbone", "experts",  "k",           "hidden",         "gate_hidden", "lambda1",
      "lambda2",  "lr",       "epochs",      "seed",           "task",        "readout",
      "noise",    "gating",   "fixed_depth", "train_fraction", "metric",      "hits_n"};
  return keys;
}

[[noreturn]] void bad(const std::string& field, const std::string& msg) {
  throw ConfigError(field + ": " + msg);
}

std::uint64_t get_unsigned(const json& j, const std::string& field) {
  if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
    bad(field, "must be a non-negative integer");
  return j.get<std::uint64_t>();
}

double get_number(const json& j, const std::string& field) {
  if (!j.is_number()) bad(field, "must be a number");
  return j.get<double>();
}

template <typename Parse>
auto get_enum(const json& j, const std::string& field, Parse parse) {
  if (!j.is_string()) bad(field, "must be a string");
  try {
    return parse(j.get<std::string>());
  } catch (const std::invalid_argument& e) {
    bad(field, e.what());
  }
}

json matrix_to_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"values", std::vector<double>(m.values().begin(), m.values().end())}};
}

}  // namespace

TrainConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: expected a JSON object");
  TrainConfig c;
  for (const auto& [key, v] : j.items()) {
    if (!config_keys().contains(key)) bad(key, "unknown configuration key");
    if (key == "backbone") c.backbone = get_enum(v, key, parse_backbone);
    else if (key == "experts") c.experts = get_unsigned(v, key);
    else if (key == "k") c.k = get_unsigned(v, key);
    else if (key == "hidden") c.hidden = get_unsigned(v, key);
    else if (key == "gate_hidden") c.gate_hidden = get_unsigned(v, key);
    else if (key == "lambda1") c.lambda1 = get_number(v, key);
    else if (key == "lambda2") c.lambda2 = get_number(v, key);
    else if (key == "lr") c.lr = get_number(v, key);
    else if (key == "epochs") {
      if (!v.is_number_integer()) bad(key, "must be an integer");
      const auto e = v.get<long long>();
      if (e < 1 || e > 1'000'000'000) bad(key, "must be at least 1");
      c.epochs = static_cast<int>(e);
    } else if (key == "seed") c.seed = get_unsigned(v, key);
    else if (key == "task") c.task = get_enum(v, key, parse_task);
    else if (key == "readout") c.readout = get_enum(v, key, parse_readout);
    else if (key == "noise") {
      if (!v.is_boolean()) bad(key, "must be true or false");
      c.noise = v.get<bool>();
    } else if (key == "gating") c.gating = get_enum(v, key, parse_gating_mode);
    else if (key == "fixed_depth") c.fixed_depth = get_unsigned(v, key);
    else if (key == "train_fraction") c.train_fraction = get_number(v, key);
    else if (key == "metric") c.metric = get_enum(v, key, parse_metric);
    else if (key == "hits_n") c.hits_n = get_unsigned(v, key);
  }
  c.validate();
  return c;
}

json config_to_json(const TrainConfig& c) {
  json j{{"backbone", to_string(c.backbone)},
         {"experts", c.experts},
         {"k", c.k},
         {"hidden", c.hidden},
         {"gate_hidden", c.gate_hidden},
         {"lambda1", c.lambda1},
         {"lambda2", c.lambda2},
         {"lr", c.lr},
         {"epochs", c.epochs},
         {"seed", c.seed},
         {"task", to_string(c.task)},
         {"readout", to_string(c.effective_readout())},
         {"noise", c.noise},
         {"gating", to_string(c.gating)},
         {"fixed_depth", c.fixed_depth},
         {"train_fraction", c.train_fraction},
         {"metric", to_string(c.effective_metric())},
         {"hits_n", c.hits_n}};
  return j;
}

TrainConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read config file " + file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + file.string() + ": invalid JSON: " + e.what());
  }
  return config_from_json(j);
}

json report_to_json(const EvalReport& r, const TrainConfig& cfg, const std::string& dataset,
                    const std::string& timestamp) {
  // NaN is not representable in JSON; undefined values become null
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json buckets = json::object();
  for (std::size_t b = 0; b < 3; ++b) {
    const BucketReport& br = r.buckets[b];
    json q = json::array();
    for (double v : br.mean_q) q.push_back(num(v));
    buckets[std::string(to_string(kAllBuckets[b]))] = {
        {"count", br.count}, {"metric", num(br.metric)}, {"mean_q", q}, {"mean_depth", num(br.mean_depth)}};
  }
  json mean_q = json::array();
  for (double v : r.mean_q) mean_q.push_back(num(v));
  json loss = json::array();
  for (const EpochLog& e : r.log) loss.push_back(num(e.loss.total));
  return json{{"dataset", dataset},
              {"config", config_to_json(cfg)},
              {"metric", to_string(r.metric)},
              {"value", num(r.value)},
              {"evaluated", r.evaluated},
              {"executed_forwards", r.executed_forwards},
              {"buckets", buckets},
              {"mean_q", mean_q},
              {"utilization_entropy", num(r.utilization_entropy)},
              {"loss_curve", loss},
              {"timestamp", timestamp}};
}

void write_log_csv(const std::filesystem::path& file, const std::vector<EpochLog>& log) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << std::setprecision(10);
  out << "epoch,task_loss,L1,L2,total,train_metric,test_metric\n";
  for (const EpochLog& e : log)
    out << e.epoch << ',' << e.loss.task << ',' << e.loss.importance << ',' << e.loss.load << ','
        << e.loss.total << ',' << e.train_metric << ',' << e.test_metric << '\n';
}

json checkpoint_to_json(const DaMoeModel& model, const TrainConfig& cfg) {
  json params = json::object();
  for (const Parameter& p : model.params().all()) params[p.name] = matrix_to_json(p.value);
  return json{{"format", "damoe-checkpoint"},
              {"version", 1},
              {"config", config_to_json(cfg)},
              {"in_dim", model.spec().in_dim},
              {"out_dim", model.spec().out_dim},
              {"parameters", params}};
}

DaMoeModel model_from_checkpoint(const json& j) {
  try {
    if (j.at("format") != "damoe-checkpoint") throw FormatError("checkpoint: unknown format");
    const TrainConfig cfg = config_from_json(j.at("config"));
    const auto in_dim = j.at("in_dim").get<std::size_t>();
    const auto out_dim = j.at("out_dim").get<std::size_t>();
    DaMoeModel model(cfg.model_spec(in_dim, out_dim));
    const json& params = j.at("parameters");
    if (params.size() != model.params().size())
      throw FormatError("checkpoint: parameter count mismatch");
    for (Parameter& p : model.params().all()) {
      const json& m = params.at(p.name);
      const auto rows = m.at("rows").get<std::size_t>();
      const auto cols = m.at("cols").get<std::size_t>();
      auto values = m.at("values").get<std::vector<double>>();
      if (rows != p.value.rows() || cols != p.value.cols() || values.size() != rows * cols)
        throw FormatError("checkpoint: shape mismatch for " + p.name);
      std::copy(values.begin(), values.end(), p.value.values().begin());
    }
    return model;
  } catch (const json::exception& e) {
    throw FormatError(std::string("checkpoint: ") + e.what());
  }
}

json RunManifest::to_json() const {
  return json{{"config", config_to_json(config)},
              {"dataset", dataset},
              {"dataset_fingerprint", dataset_fingerprint},
              {"seeds", seeds},
              {"artifacts", artifacts},
              {"tool_version", tool_version}};
}

void write_json(const std::filesystem::path& file, const json& j) {
  std::ofstream out(file);
  if (!out) throw IoError("cannot write " + file.string());
  out << j.dump(2) << '\n';
}

json read_json(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot read " + file.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

}  // namespace damoe
