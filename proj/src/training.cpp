#include "damoe/training.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "damoe/errors.hpp"

namespace damoe {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require(bool ok, const char* field, const std::string& msg) {
  if (!ok) throw ConfigError(std::string(field) + ": " + msg);
}

}  // namespace

void TrainConfig::validate() const {
  require(experts >= 1, "experts", "must be at least 1");
  require(k >= 1 && k <= experts, "topk",
          "must satisfy 1 <= k <= experts (k=" + std::to_string(k) +
              ", experts=" + std::to_string(experts) + ")");
  require(hidden >= 1, "hidden", "must be at least 1");
  require(gate_hidden >= 1, "gate_hidden", "must be at least 1");
  require(lambda1 >= 0.0 && std::isfinite(lambda1), "lambda1", "must be a finite value >= 0");
  require(lambda2 >= 0.0 && std::isfinite(lambda2), "lambda2", "must be a finite value >= 0");
  require(lr >= 0.0 && std::isfinite(lr), "lr", "must be a finite value >= 0");
  require(epochs >= 1, "epochs", "must be at least 1");
  require(train_fraction > 0.0 && train_fraction < 1.0, "train_fraction", "must lie in (0, 1)");
  require(hits_n >= 1, "hits_n", "must be at least 1");
  const Metric m = effective_metric();
  const bool ok = [&] {
    switch (task) {
      case Task::graph_classification:
      case Task::node_classification: return m == Metric::accuracy || m == Metric::roc_auc;
      case Task::graph_regression: return m == Metric::rmse;
      case Task::link_prediction: return m == Metric::hits || m == Metric::roc_auc;
    }
    return false;
  }();
  require(ok, "metric",
          std::string(to_string(m)) + " does not apply to " + std::string(to_string(task)));
}

ModelSpec TrainConfig::model_spec(std::size_t in_dim, std::size_t num_classes) const {
  ModelSpec s;
  s.backbone = backbone;
  s.in_dim = in_dim;
  s.hidden = hidden;
  switch (task) {
    case Task::graph_classification:
    case Task::node_classification: s.out_dim = num_classes; break;
    case Task::graph_regression: s.out_dim = 1; break;
    case Task::link_prediction: s.out_dim = 0; break;
  }
  s.experts = experts;
  s.k = k;
  s.gate_hidden = gate_hidden;
  s.readout = effective_readout();
  s.noise = noise;
  s.gating = gating;
  s.level = is_graph_level(task) ? Level::graph : Level::node;
  s.fixed_depth = fixed_depth;
  s.seed = seed;
  return s;
}

// ---- data preparation ----------------------------------------------------------

namespace {

Example graph_example(const Graph& g, const GraphContext& c, Task task) {
  Example e{&g, &c, {}};
  if (task == Task::graph_regression)
    e.targets.values = {g.target};
  else
    e.targets.labels = {g.label};
  return e;
}

void build_contexts(PreparedTask& p) {
  p.contexts.clear();
  p.contexts.reserve(p.graphs.size());
  for (const Graph& g : p.graphs) p.contexts.push_back(make_context(g));
}

}  // namespace

PreparedTask prepare_task(const TrainConfig& cfg, const GraphDataset& train, const GraphDataset& test) {
  if (!is_graph_level(cfg.task))
    throw ArgumentError("prepare_task: explicit train/test datasets are for graph-level tasks");
  if (train.graphs.empty() || test.graphs.empty()) throw ArgumentError("prepare_task: empty split");
  if (train.feature_dim != test.feature_dim)
    throw DimensionError("prepare_task: train and test feature widths differ");
  PreparedTask p;
  p.task = cfg.task;
  p.in_dim = train.feature_dim;
  p.num_classes = static_cast<std::size_t>(std::max(train.num_classes, test.num_classes));
  if (cfg.task == Task::graph_classification && p.num_classes < 2)
    throw ArgumentError("prepare_task: classification needs at least two classes");
  p.graphs = train.graphs;
  p.graphs.insert(p.graphs.end(), test.graphs.begin(), test.graphs.end());
  build_contexts(p);
  for (std::size_t i = 0; i < p.graphs.size(); ++i) {
    Example e = graph_example(p.graphs[i], p.contexts[i], cfg.task);
    (i < train.graphs.size() ? p.train : p.test).push_back(std::move(e));
  }
  return p;
}

PreparedTask prepare_task(const TrainConfig& cfg, const GraphDataset& full) {
  if (full.graphs.empty()) throw ArgumentError("prepare_task: empty dataset");
  if (is_graph_level(cfg.task)) {
    const DatasetSplit split = split_dataset(full, cfg.train_fraction, cfg.seed);
    return prepare_task(cfg, split.train, split.test);
  }

  PreparedTask p;
  p.task = cfg.task;
  p.in_dim = full.feature_dim;
  if (cfg.task == Task::node_classification) {
    p.num_classes = static_cast<std::size_t>(full.num_classes);
    if (p.num_classes < 2) throw ArgumentError("prepare_task: node classification needs two classes");
    p.graphs = full.graphs;
    build_contexts(p);
    const NodeSplit ns = split_nodes(full, cfg.train_fraction, cfg.seed);
    for (std::size_t i = 0; i < p.graphs.size(); ++i) {
      const Graph& g = p.graphs[i];
      if (g.node_labels.size() != g.n)
        throw ArgumentError("prepare_task: graph " + std::to_string(g.id) + " lacks node labels");
      auto make = [&](const std::vector<std::size_t>& rows) {
        Example e{&g, &p.contexts[i], {}};
        e.targets.rows = rows;
        for (std::size_t r : rows) e.targets.labels.push_back(g.node_labels[r]);
        return e;
      };
      if (!ns.train_nodes[i].empty()) p.train.push_back(make(ns.train_nodes[i]));
      if (!ns.test_nodes[i].empty()) p.test.push_back(make(ns.test_nodes[i]));
    }
  } else {
    if (full.graphs.size() != 1)
      throw ArgumentError("prepare_task: link prediction expects a single-graph dataset");
    const LinkSplit ls = make_link_split(full.graphs[0], 0.1, cfg.seed);
    p.graphs = {ls.graph};
    build_contexts(p);
    auto make = [&](const auto& pos, const auto& neg) {
      Example e{&p.graphs[0], &p.contexts[0], {}};
      for (const auto& [u, v] : pos) {
        e.targets.pair_u.push_back(u);
        e.targets.pair_v.push_back(v);
        e.targets.values.push_back(1.0);
      }
      for (const auto& [u, v] : neg) {
        e.targets.pair_u.push_back(u);
        e.targets.pair_v.push_back(v);
        e.targets.values.push_back(0.0);
      }
      return e;
    };
    p.train.push_back(make(ls.train_pos, ls.train_neg));
    p.test.push_back(make(ls.test_pos, ls.test_neg));
  }
  if (p.train.empty() || p.test.empty()) throw ArgumentError("prepare_task: empty split");
  return p;
}

// ---- evaluation -------------------------------------------------------------------

namespace {

double softmax_prob(std::span<const double> logits, std::size_t cls) {
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  return std::exp(logits[cls] - mx) / z;
}

}  // namespace

double compute_metric(std::span<const ExampleOutput> outputs, std::span<const Example> examples,
                      Task task, Metric metric, std::size_t hits_n) {
  if (outputs.size() != examples.size()) throw DimensionError("compute_metric: length mismatch");
  std::vector<int> pred, truth;
  std::vector<double> pos, neg, values, targets;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const Matrix& out = outputs[i].out;
    const Targets& t = examples[i].targets;
    switch (task) {
      case Task::graph_classification:
      case Task::node_classification: {
        const bool node = task == Task::node_classification;
        const std::size_t n = node ? t.rows.size() : 1;
        for (std::size_t j = 0; j < n; ++j) {
          const auto row = out.row_span(node ? t.rows[j] : 0);
          const int y = t.labels[j];
          if (metric == Metric::roc_auc) {
            if (row.size() != 2) throw MetricError("ROC-AUC needs a binary task");
            (y == 1 ? pos : neg).push_back(softmax_prob(row, 1));
          } else {
            std::size_t best = 0;
            for (std::size_t c = 1; c < row.size(); ++c)
              if (row[c] > row[best]) best = c;
            pred.push_back(static_cast<int>(best));
            truth.push_back(y);
          }
        }
        break;
      }
      case Task::graph_regression:
        values.push_back(out[0]);
        targets.push_back(t.values[0]);
        break;
      case Task::link_prediction:
        for (std::size_t j = 0; j < t.values.size(); ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < out.cols(); ++c) s += out(t.pair_u[j], c) * out(t.pair_v[j], c);
          (t.values[j] > 0.5 ? pos : neg).push_back(s);
        }
        break;
    }
  }
  switch (metric) {
    case Metric::accuracy: return accuracy(pred, truth);
    case Metric::roc_auc: return roc_auc(pos, neg);
    case Metric::rmse: return rmse(values, targets);
    case Metric::hits: return hits_at_n(pos, neg, hits_n);
  }
  return kNaN;
}

namespace {

double metric_or_nan(std::span<const ExampleOutput> outputs, std::span<const Example> examples,
                     Task task, Metric metric, std::size_t hits_n) {
  if (examples.empty()) return kNaN;
  try {
    return compute_metric(outputs, examples, task, metric, hits_n);
  } catch (const MetricError&) {
    return kNaN;
  }
}

}  // namespace

EvalReport evaluate(const DaMoeModel& model, std::span<const Example> examples, Task task,
                    Metric metric, std::size_t hits_n) {
  EvalReport r;
  r.metric = metric;
  r.evaluated = examples.size();
  const std::vector<ExampleOutput> outputs = infer(model, examples);
  r.value = metric_or_nan(outputs, examples, task, metric, hits_n);
  for (const ExampleOutput& o : outputs) r.executed_forwards += o.executed.size();

  const std::size_t s = model.is_mixture() ? model.gate().s : 0;
  r.mean_q.assign(s, 0.0);
  std::size_t gated_rows = 0;
  std::array<std::vector<ExampleOutput>, 3> bucket_out;
  std::array<std::vector<Example>, 3> bucket_ex;
  std::array<std::size_t, 3> bucket_rows{};
  for (auto& b : r.buckets) b.mean_q.assign(s, 0.0);

  for (std::size_t i = 0; i < outputs.size(); ++i) {
    const auto bi = static_cast<std::size_t>(bucket_of(examples[i].graph->n));
    if (is_graph_level(task)) {
      bucket_out[bi].push_back(outputs[i]);
      bucket_ex[bi].push_back(examples[i]);
    }
    if (!outputs[i].gating) continue;
    const Matrix& q = outputs[i].gating->weights;
    for (std::size_t row = 0; row < q.rows(); ++row) {
      double depth = 0.0;
      for (std::size_t e = 0; e < s; ++e) {
        r.mean_q[e] += q(row, e);
        depth += q(row, e) * static_cast<double>(e + 1);
        if (is_graph_level(task)) r.buckets[bi].mean_q[e] += q(row, e);
      }
      if (is_graph_level(task)) {
        r.buckets[bi].mean_depth += depth;
        ++bucket_rows[bi];
      }
      ++gated_rows;
    }
  }
  if (gated_rows > 0)
    for (double& v : r.mean_q) v /= static_cast<double>(gated_rows);
  r.utilization_entropy = entropy(r.mean_q);

  for (std::size_t b = 0; b < 3; ++b) {
    BucketReport& br = r.buckets[b];
    br.count = bucket_ex[b].size();
    br.metric = metric_or_nan(bucket_out[b], bucket_ex[b], task, metric, hits_n);
    if (bucket_rows[b] > 0) {
      for (double& v : br.mean_q) v /= static_cast<double>(bucket_rows[b]);
      br.mean_depth /= static_cast<double>(bucket_rows[b]);
    } else {
      br.mean_depth = kNaN;
    }
  }
  return r;
}

// ---- optimization -----------------------------------------------------------------

Adam::Adam(const ParameterStore& params, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(params.zeros_like()), v_(params.zeros_like()) {}

void Adam::step(ParameterStore& params, std::span<const Matrix> grads) {
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, t_);
  const double c2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& w = params[p].value;
    const Matrix& g = grads[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g[i];
      v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g[i] * g[i];
      const double mhat = m_[p][i] / c1;
      const double vhat = v_[p][i] / c2;
      w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

TrainResult train(const TrainConfig& cfg, const PreparedTask& data, const EpochCallback& on_epoch) {
  cfg.validate();
  if (cfg.task != data.task) throw ArgumentError("train: config task does not match the prepared data");
  TrainResult result{DaMoeModel(cfg.model_spec(data.in_dim, data.num_classes)), {}, 0.0};
  DaMoeModel& model = result.model;
  Adam adam(model.params(), cfg.lr);
  std::mt19937_64 noise_rng(cfg.seed ^ 0x5DEECE66DULL);
  const BatchSpec spec{cfg.task, cfg.lambda1, cfg.lambda2};
  const Metric metric = cfg.effective_metric();

  std::vector<EpochLog> log;
  std::vector<Matrix> noise;
  double seconds = 0.0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    noise.clear();
    if (model.uses_noise())
      for (const Example& e : data.train)
        noise.push_back(draw_noise(model.noise_rows(*e.graph), model.gate().s, noise_rng));
    BatchGradient g = batch_gradient(model, data.train, noise, spec);
    if (!std::isfinite(g.loss.total))
      throw TrainingError("non-finite loss at epoch " + std::to_string(epoch), epoch);
    for (const Matrix& m : g.grads)
      if (!m.all_finite())
        throw TrainingError("non-finite gradient at epoch " + std::to_string(epoch), epoch);
    adam.step(model.params(), g.grads);
    seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    EpochLog entry;
    entry.epoch = epoch;
    entry.loss = g.loss;
    entry.train_metric = metric_or_nan(g.outputs, data.train, cfg.task, metric, cfg.hits_n);
    const auto test_out = infer(model, data.test);
    entry.test_metric = metric_or_nan(test_out, data.test, cfg.task, metric, cfg.hits_n);
    log.push_back(entry);
    if (on_epoch) on_epoch(entry);
  }
  result.seconds_per_epoch = seconds / cfg.epochs;
  result.report = evaluate(model, data.test, cfg.task, metric, cfg.hits_n);
  result.report.log = std::move(log);
  return result;
}

TrainResult train(const TrainConfig& cfg, const GraphDataset& full, const EpochCallback& on_epoch) {
  cfg.validate();
  const PreparedTask data = prepare_task(cfg, full);
  return train(cfg, data, on_epoch);
}

}  // namespace damoe
