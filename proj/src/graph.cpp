#include "damoe/graph.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <queue>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "damoe/errors.hpp"

namespace damoe {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string_view to_string(Task t) {
  switch (t) {
    case Task::graph_classification: return "graph-classification";
    case Task::graph_regression: return "graph-regression";
    case Task::node_classification: return "node-classification";
    case Task::link_prediction: return "link-prediction";
  }
  return "?";
}

Task parse_task(std::string_view s) {
  for (Task t : {Task::graph_classification, Task::graph_regression, Task::node_classification,
                 Task::link_prediction})
    if (to_string(t) == s) return t;
  throw ConfigError("unknown task '" + std::string(s) +
                    "' (expected graph-classification, graph-regression, "
                    "node-classification or link-prediction)");
}

std::string_view to_string(ScaleBucket b) {
  switch (b) {
    case ScaleBucket::small: return "small";
    case ScaleBucket::medium: return "medium";
    case ScaleBucket::large: return "large";
  }
  return "?";
}

ScaleBucket bucket_of(std::size_t n) {
  if (n < 15) return ScaleBucket::small;
  if (n <= 25) return ScaleBucket::medium;
  return ScaleBucket::large;
}

// ---- Graph -----------------------------------------------------------------

void Graph::add_edge(std::size_t u, std::size_t v) {
  if (u == v || has_edge(u, v)) return;
  arcs.emplace_back(u, v);
  arcs.emplace_back(v, u);
}

bool Graph::has_edge(std::size_t u, std::size_t v) const {
  return std::find(arcs.begin(), arcs.end(), std::pair{u, v}) != arcs.end();
}

std::vector<std::size_t> Graph::degrees() const {
  std::vector<std::size_t> deg(n, 0);
  for (const auto& [u, v] : arcs) ++deg[u];
  return deg;
}

std::vector<std::vector<std::size_t>> Graph::adjacency_list() const {
  std::vector<std::vector<std::size_t>> adj(n);
  for (const auto& [u, v] : arcs) adj[u].push_back(v);
  return adj;
}

void Graph::validate() const {
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& [u, v] : arcs) {
    if (u >= n || v >= n)
      throw FormatError("graph " + std::to_string(id) + ": arc (" + std::to_string(u) + ", " +
                        std::to_string(v) + ") outside [0, " + std::to_string(n) + ")");
    seen.emplace(u, v);
  }
  for (const auto& [u, v] : seen)
    if (!seen.contains({v, u}))
      throw FormatError("graph " + std::to_string(id) + ": arc (" + std::to_string(u) + ", " +
                        std::to_string(v) + ") has no reverse");
  if (x.rows() != n)
    throw FormatError("graph " + std::to_string(id) + ": feature matrix has " +
                      std::to_string(x.rows()) + " rows for " + std::to_string(n) + " nodes");
  if (!node_labels.empty() && node_labels.size() != n)
    throw FormatError("graph " + std::to_string(id) + ": node label count mismatch");
}

void GraphDataset::validate() const {
  if (graphs.empty()) throw FormatError("dataset '" + name + "' is empty");
  for (const Graph& g : graphs) {
    g.validate();
    if (g.x.cols() != feature_dim)
      throw FormatError("graph " + std::to_string(g.id) + " has feature dim " +
                        std::to_string(g.x.cols()) + ", dataset has " + std::to_string(feature_dim));
  }
}

BucketMap bucket_by_scale(const GraphDataset& ds) {
  BucketMap m;
  for (ScaleBucket b : kAllBuckets) m[b];
  for (std::size_t i = 0; i < ds.graphs.size(); ++i) m[bucket_of(ds.graphs[i].n)].push_back(i);
  return m;
}

// ---- TU text format ----------------------------------------------------------

namespace {

fs::path tu_file(const fs::path& dir, const std::string& name, const char* suffix) {
  return dir / (name + "_" + suffix + ".txt");
}

std::vector<std::string> read_lines(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

template <class T>
std::vector<T> parse_fields(std::string line, const fs::path& file, std::size_t lineno) {
  std::replace(line.begin(), line.end(), ',', ' ');
  std::istringstream ss(line);
  std::vector<T> out;
  T v;
  while (ss >> v) out.push_back(v);
  if (!ss.eof())
    throw FormatError(file.filename().string() + " line " + std::to_string(lineno) +
                      ": cannot parse '" + line + "'");
  return out;
}

// Maps sorted distinct values to 0..k-1.
std::map<long long, int> contiguous_codes(const std::vector<long long>& values) {
  std::map<long long, int> codes;
  for (long long v : values) codes.emplace(v, 0);
  int next = 0;
  for (auto& [v, c] : codes) c = next++;
  return codes;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

GraphDataset load_tu_dataset(const fs::path& dir, const std::string& name, const LoadOptions& opts) {
  const fs::path f_a = tu_file(dir, name, "A");
  const fs::path f_ind = tu_file(dir, name, "graph_indicator");
  const fs::path f_gl = tu_file(dir, name, "graph_labels");
  const fs::path f_nl = tu_file(dir, name, "node_labels");
  const fs::path f_na = tu_file(dir, name, "node_attributes");
  for (const fs::path& p : {f_a, f_ind, f_gl})
    if (!fs::exists(p)) throw IoError("missing dataset file " + p.string());

  // graph indicator: line i holds the 1-based graph id of global node i
  std::vector<std::size_t> node_graph;  // 0-based graph per global node
  {
    const auto lines = read_lines(f_ind);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (blank(lines[i])) continue;
      const auto f = parse_fields<long long>(lines[i], f_ind, i + 1);
      if (f.size() != 1 || f[0] < 1)
        throw FormatError(f_ind.filename().string() + " line " + std::to_string(i + 1) +
                          ": expected a positive graph id");
      node_graph.push_back(static_cast<std::size_t>(f[0] - 1));
    }
  }
  const std::size_t n_nodes = node_graph.size();
  std::size_t n_graphs = 0;
  for (std::size_t gid : node_graph) n_graphs = std::max(n_graphs, gid + 1);

  std::vector<std::size_t> local(n_nodes);
  std::vector<std::size_t> sizes(n_graphs, 0);
  for (std::size_t i = 0; i < n_nodes; ++i) local[i] = sizes[node_graph[i]]++;
  for (std::size_t g = 0; g < n_graphs; ++g)
    if (sizes[g] == 0) throw FormatError("graph " + std::to_string(g + 1) + " has no nodes");

  GraphDataset ds;
  ds.name = name;
  ds.task = opts.task;
  ds.graphs.resize(n_graphs);
  for (std::size_t g = 0; g < n_graphs; ++g) {
    ds.graphs[g].id = g;
    ds.graphs[g].n = sizes[g];
  }

  {
    const auto lines = read_lines(f_a);
    std::vector<std::set<std::pair<std::size_t, std::size_t>>> edges(n_graphs);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (blank(lines[i])) continue;
      const auto f = parse_fields<long long>(lines[i], f_a, i + 1);
      const std::string where = f_a.filename().string() + " line " + std::to_string(i + 1);
      if (f.size() != 2) throw FormatError(where + ": expected 'i, j'");
      for (long long v : f)
        if (v < 1 || static_cast<std::size_t>(v) > n_nodes)
          throw FormatError(where + ": node " + std::to_string(v) + " is not in the graph indicator");
      const std::size_t u = static_cast<std::size_t>(f[0] - 1), v = static_cast<std::size_t>(f[1] - 1);
      if (node_graph[u] != node_graph[v])
        throw FormatError(where + ": edge (" + std::to_string(f[0]) + ", " + std::to_string(f[1]) +
                          ") joins graph " + std::to_string(node_graph[u] + 1) + " and graph " +
                          std::to_string(node_graph[v] + 1));
      if (u == v) continue;
      const std::size_t a = local[u], b = local[v];
      edges[node_graph[u]].emplace(std::min(a, b), std::max(a, b));
    }
    for (std::size_t g = 0; g < n_graphs; ++g)
      for (const auto& [a, b] : edges[g]) {
        ds.graphs[g].arcs.emplace_back(a, b);
        ds.graphs[g].arcs.emplace_back(b, a);
      }
  }

  {
    const auto lines = read_lines(f_gl);
    std::vector<std::string> values;
    for (const auto& l : lines)
      if (!blank(l)) values.push_back(l);
    if (values.size() != n_graphs)
      throw FormatError(f_gl.filename().string() + ": " + std::to_string(values.size()) +
                        " labels for " + std::to_string(n_graphs) + " graphs");
    if (opts.task == Task::graph_regression) {
      for (std::size_t g = 0; g < n_graphs; ++g) {
        const auto f = parse_fields<double>(values[g], f_gl, g + 1);
        if (f.size() != 1) throw FormatError(f_gl.filename().string() + ": bad target");
        ds.graphs[g].target = f[0];
      }
    } else {
      std::vector<long long> raw;
      for (std::size_t g = 0; g < n_graphs; ++g) {
        const auto f = parse_fields<long long>(values[g], f_gl, g + 1);
        if (f.size() != 1) throw FormatError(f_gl.filename().string() + ": bad label");
        raw.push_back(f[0]);
      }
      const auto codes = contiguous_codes(raw);
      for (std::size_t g = 0; g < n_graphs; ++g) ds.graphs[g].label = codes.at(raw[g]);
      if (opts.task == Task::graph_classification) ds.num_classes = static_cast<int>(codes.size());
    }
  }

  std::vector<long long> raw_node_labels;
  if (fs::exists(f_nl)) {
    const auto lines = read_lines(f_nl);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (blank(lines[i])) continue;
      const auto f = parse_fields<long long>(lines[i], f_nl, i + 1);
      if (f.empty()) throw FormatError(f_nl.filename().string() + ": empty label line");
      raw_node_labels.push_back(f[0]);
    }
    if (raw_node_labels.size() != n_nodes)
      throw FormatError(f_nl.filename().string() + ": " + std::to_string(raw_node_labels.size()) +
                        " labels for " + std::to_string(n_nodes) + " nodes");
  }
  std::vector<std::vector<double>> attrs;
  if (fs::exists(f_na)) {
    const auto lines = read_lines(f_na);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (blank(lines[i])) continue;
      attrs.push_back(parse_fields<double>(lines[i], f_na, i + 1));
      if (attrs.back().size() != attrs.front().size())
        throw FormatError(f_na.filename().string() + " line " + std::to_string(i + 1) +
                          ": inconsistent attribute count");
    }
    if (attrs.size() != n_nodes)
      throw FormatError(f_na.filename().string() + ": " + std::to_string(attrs.size()) +
                        " rows for " + std::to_string(n_nodes) + " nodes");
  }

  const bool labels_are_targets = opts.task == Task::node_classification;
  if (labels_are_targets && raw_node_labels.empty())
    throw FormatError("node classification needs " + f_nl.filename().string());
  const auto node_codes = contiguous_codes(raw_node_labels);
  const bool label_features = !raw_node_labels.empty() && !labels_are_targets;
  const std::size_t label_dim = label_features ? node_codes.size() : 0;
  const std::size_t attr_dim = attrs.empty() ? 0 : attrs.front().size();
  const bool degree_features = label_dim + attr_dim == 0;
  ds.feature_dim = degree_features ? opts.degree_cap + 1 : label_dim + attr_dim;
  if (labels_are_targets) ds.num_classes = static_cast<int>(node_codes.size());

  for (Graph& g : ds.graphs) g.x = Matrix(g.n, ds.feature_dim);
  if (labels_are_targets)
    for (Graph& g : ds.graphs) g.node_labels.assign(g.n, 0);
  std::vector<std::vector<std::size_t>> degs;
  if (degree_features)
    for (const Graph& g : ds.graphs) degs.push_back(g.degrees());
  for (std::size_t i = 0; i < n_nodes; ++i) {
    Graph& g = ds.graphs[node_graph[i]];
    const std::size_t v = local[i];
    if (degree_features) {
      g.x(v, std::min(degs[node_graph[i]][v], opts.degree_cap)) = 1.0;
      if (labels_are_targets) g.node_labels[v] = node_codes.at(raw_node_labels[i]);
      continue;
    }
    if (label_features) g.x(v, static_cast<std::size_t>(node_codes.at(raw_node_labels[i]))) = 1.0;
    if (labels_are_targets) g.node_labels[v] = node_codes.at(raw_node_labels[i]);
    for (std::size_t c = 0; c < attr_dim; ++c) g.x(v, label_dim + c) = attrs[i][c];
  }
  ds.validate();
  return ds;
}

void write_tu_dataset(const GraphDataset& ds, const fs::path& dir) {
  fs::create_directories(dir);
  auto open = [&](const char* suffix) {
    const fs::path p = tu_file(dir, ds.name, suffix);
    std::ofstream out(p);
    if (!out) throw IoError("cannot write " + p.string());
    return out;
  };
  std::ofstream a = open("A"), ind = open("graph_indicator"), gl = open("graph_labels"),
                na = open("node_attributes");
  std::size_t offset = 0;
  for (std::size_t g = 0; g < ds.graphs.size(); ++g) {
    const Graph& gr = ds.graphs[g];
    for (const auto& [u, v] : gr.arcs) a << (offset + u + 1) << ", " << (offset + v + 1) << '\n';
    for (std::size_t v = 0; v < gr.n; ++v) {
      ind << (g + 1) << '\n';
      for (std::size_t c = 0; c < gr.x.cols(); ++c) na << (c ? ", " : "") << fmt_double(gr.x(v, c));
      na << '\n';
    }
    if (ds.task == Task::graph_regression)
      gl << fmt_double(gr.target) << '\n';
    else
      gl << gr.label << '\n';
    offset += gr.n;
  }
  if (ds.task == Task::node_classification) {
    std::ofstream nl = open("node_labels");
    for (const Graph& gr : ds.graphs)
      for (int l : gr.node_labels) nl << l << '\n';
  }
  std::ofstream m(dir / (ds.name + "_manifest.json"));
  if (!m) throw IoError("cannot write manifest in " + dir.string());
  m << dataset_manifest_json(ds) << '\n';
}

std::string dataset_manifest_json(const GraphDataset& ds) {
  std::size_t nodes = 0, edges = 0;
  for (const Graph& g : ds.graphs) {
    nodes += g.n;
    edges += g.edge_count();
  }
  const BucketMap buckets = bucket_by_scale(ds);
  json j;
  j["name"] = ds.name;
  j["task"] = std::string(to_string(ds.task));
  j["feature_dim"] = ds.feature_dim;
  j["num_classes"] = ds.num_classes;
  j["counts"] = {{"graphs", ds.graphs.size()},
                 {"nodes", nodes},
                 {"edges", edges},
                 {"small", buckets.at(ScaleBucket::small).size()},
                 {"medium", buckets.at(ScaleBucket::medium).size()},
                 {"large", buckets.at(ScaleBucket::large).size()}};
  return j.dump(2);
}

DatasetManifest read_dataset_manifest(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open " + file.string());
  json j;
  try {
    in >> j;
    DatasetManifest m;
    m.name = j.at("name").get<std::string>();
    m.task = parse_task(j.at("task").get<std::string>());
    m.feature_dim = j.at("feature_dim").get<std::size_t>();
    m.num_classes = j.at("num_classes").get<int>();
    m.graphs = j.at("counts").at("graphs").get<std::size_t>();
    return m;
  } catch (const json::exception& e) {
    throw FormatError(file.string() + ": " + e.what());
  }
}

std::uint64_t dataset_fingerprint(const GraphDataset& ds) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  mix(static_cast<std::uint64_t>(ds.task));
  mix(ds.feature_dim);
  for (const Graph& g : ds.graphs) {
    mix(g.n);
    auto arcs = g.arcs;
    std::sort(arcs.begin(), arcs.end());
    for (const auto& [u, v] : arcs) {
      mix(u);
      mix(v);
    }
    for (double x : g.x.values()) mix(std::bit_cast<std::uint64_t>(x));
    mix(static_cast<std::uint64_t>(g.label));
    mix(std::bit_cast<std::uint64_t>(g.target));
    for (int l : g.node_labels) mix(static_cast<std::uint64_t>(l));
  }
  return h;
}

// ---- synthetic data ----------------------------------------------------------

std::vector<int> bfs_distances(const Graph& g, std::size_t source) {
  const auto adj = g.adjacency_list();
  std::vector<int> dist(g.n, -1);
  std::queue<std::size_t> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    const std::size_t u = q.front();
    q.pop();
    for (std::size_t v : adj[u])
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        q.push(v);
      }
  }
  return dist;
}

int hop_radius_for_size(std::size_t n, int max_hops) {
  constexpr std::size_t kMin = 6, kSpan = 35;  // sizes 6..40
  const std::size_t over = n > kMin ? n - kMin : 0;
  const int r = 1 + static_cast<int>(over * static_cast<std::size_t>(max_hops) / kSpan);
  return std::clamp(r, 1, max_hops);
}

namespace {

Graph random_structure(std::size_t n, std::mt19937_64& rng) {
  Graph g;
  g.n = n;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::bernoulli_distribution cyclic(0.5);
  std::size_t start = 1;
  if (cyclic(rng)) {
    std::uniform_int_distribution<std::size_t> len(3, n);
    const std::size_t m = len(rng);
    for (std::size_t i = 0; i < m; ++i) g.add_edge(perm[i], perm[(i + 1) % m]);
    start = m;
  }
  // parents come from a short window of recent nodes, giving long thin trees
  constexpr std::size_t kWindow = 3;
  for (std::size_t i = start; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> parent(i > kWindow ? i - kWindow : 0, i - 1);
    g.add_edge(perm[i], perm[parent(rng)]);
  }
  return g;
}

}  // namespace

GraphDataset generate_depth_sensitive_dataset(std::size_t count, std::uint64_t seed,
                                              std::size_t d_feature, int max_hops) {
  if (count == 0) throw ArgumentError("generate_depth_sensitive_dataset: count must be positive");
  if (max_hops < 2) throw ArgumentError("generate_depth_sensitive_dataset: max_hops must be >= 2");
  if (d_feature < 1) throw ArgumentError("generate_depth_sensitive_dataset: d_feature must be >= 1");

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> size_dist(6, 40);
  std::bernoulli_distribution coin(0.5);
  std::uniform_real_distribution<double> noise(0.0, 1.0);

  GraphDataset ds;
  ds.name = "SYNTH";
  ds.task = Task::graph_classification;
  ds.num_classes = 2;
  ds.feature_dim = d_feature;
  ds.graphs.reserve(count);
  for (std::size_t gi = 0; gi < count; ++gi) {
    const std::size_t n = size_dist(rng);
    const int r = hop_radius_for_size(n, max_hops);
    const bool positive = coin(rng);
    for (;;) {
      Graph g = random_structure(n, rng);
      // pairs grouped by hop distance
      std::map<int, std::vector<std::pair<std::size_t, std::size_t>>> by_dist;
      for (std::size_t u = 0; u < n; ++u) {
        const auto d = bfs_distances(g, u);
        for (std::size_t v = u + 1; v < n; ++v) by_dist[d[v]].emplace_back(u, v);
      }
      std::vector<int> eligible;
      for (const auto& [d, pairs] : by_dist)
        if (d >= 1 && (positive ? d <= r : d > r)) eligible.push_back(d);
      if (eligible.empty()) continue;
      std::uniform_int_distribution<std::size_t> pick_d(0, eligible.size() - 1);
      const auto& pairs = by_dist[eligible[pick_d(rng)]];
      std::uniform_int_distribution<std::size_t> pick_p(0, pairs.size() - 1);
      const auto [a, b] = pairs[pick_p(rng)];

      g.id = gi;
      g.label = positive ? 1 : 0;
      g.x = Matrix(n, d_feature);
      for (std::size_t v = 0; v < n; ++v) {
        g.x(v, 0) = (v == a || v == b) ? 1.0 : 0.0;
        if (d_feature > 1) g.x(v, 1) = 1.0;
        for (std::size_t c = 2; c < d_feature; ++c) g.x(v, c) = noise(rng);
      }
      ds.graphs.push_back(std::move(g));
      break;
    }
  }
  return ds;
}

// ---- splitting ---------------------------------------------------------------

namespace {

GraphDataset subset(const GraphDataset& ds, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  GraphDataset out;
  out.name = ds.name;
  out.task = ds.task;
  out.feature_dim = ds.feature_dim;
  out.num_classes = ds.num_classes;
  out.graphs.reserve(idx.size());
  for (std::size_t i : idx) out.graphs.push_back(ds.graphs[i]);
  return out;
}

}  // namespace

DatasetSplit split_dataset(const GraphDataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ArgumentError("split_dataset: train_fraction must lie in (0, 1)");
  const std::size_t N = ds.graphs.size();
  if (N < 2) throw ArgumentError("split_dataset: need at least two graphs");
  const auto n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(static_cast<double>(N) * train_fraction)), 1, N - 1);

  std::mt19937_64 rng(seed);
  DatasetSplit out;
  std::vector<std::size_t> train, test;

  bool stratify = ds.task == Task::graph_classification;
  std::map<int, std::vector<std::size_t>> by_class;
  if (stratify) {
    for (std::size_t i = 0; i < N; ++i) by_class[ds.graphs[i].label].push_back(i);
    for (const auto& [c, members] : by_class)
      if (members.size() < 2) {
        std::cerr << "warning: class " << c << " of '" << ds.name << "' has " << members.size()
                  << " graph(s); falling back to an unstratified split\n";
        stratify = false;
        break;
      }
  }

  if (stratify) {
    struct Share {
      int cls;
      std::size_t take;
      double frac;
    };
    std::vector<Share> shares;
    std::size_t assigned = 0;
    for (auto& [c, members] : by_class) {
      std::shuffle(members.begin(), members.end(), rng);
      const double exact = static_cast<double>(members.size()) * train_fraction;
      const auto base = static_cast<std::size_t>(std::floor(exact));
      shares.push_back({c, base, exact - static_cast<double>(base)});
      assigned += base;
    }
    std::vector<std::size_t> order(shares.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t x, std::size_t y) { return shares[x].frac > shares[y].frac; });
    for (std::size_t pass = 0; assigned < n_train && pass < 2; ++pass)
      for (std::size_t o : order) {
        if (assigned == n_train) break;
        Share& s = shares[o];
        if (s.take < by_class[s.cls].size()) {
          ++s.take;
          ++assigned;
        }
      }
    for (const Share& s : shares) {
      const auto& members = by_class[s.cls];
      train.insert(train.end(), members.begin(), members.begin() + static_cast<long>(s.take));
      test.insert(test.end(), members.begin() + static_cast<long>(s.take), members.end());
    }
  } else {
    std::vector<std::size_t> all(N);
    std::iota(all.begin(), all.end(), std::size_t{0});
    std::shuffle(all.begin(), all.end(), rng);
    train.assign(all.begin(), all.begin() + static_cast<long>(n_train));
    test.assign(all.begin() + static_cast<long>(n_train), all.end());
  }
  out.stratified = stratify;
  out.train = subset(ds, std::move(train));
  out.test = subset(ds, std::move(test));
  return out;
}

Matrix normalized_adjacency(const Graph& g) {
  const auto deg = g.degrees();
  std::vector<double> inv_sqrt(g.n);
  for (std::size_t i = 0; i < g.n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(static_cast<double>(deg[i] + 1));
  Matrix a(g.n, g.n);
  for (std::size_t i = 0; i < g.n; ++i) a(i, i) = inv_sqrt[i] * inv_sqrt[i];
  for (const auto& [u, v] : g.arcs) a(u, v) = inv_sqrt[u] * inv_sqrt[v];
  return a;
}

LinkSplit make_link_split(const Graph& g, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0))
    throw ArgumentError("make_link_split: test_fraction must lie in (0, 1)");
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& [u, v] : g.arcs)
    if (u < v) edges.emplace_back(u, v);
  std::sort(edges.begin(), edges.end());
  if (edges.size() < 2) throw ArgumentError("make_link_split: graph needs at least two edges");
  std::mt19937_64 rng(seed);
  std::shuffle(edges.begin(), edges.end(), rng);
  const auto n_test = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(static_cast<double>(edges.size()) * test_fraction)), 1,
      edges.size() - 1);

  LinkSplit s;
  s.test_pos.assign(edges.begin(), edges.begin() + static_cast<long>(n_test));
  s.train_pos.assign(edges.begin() + static_cast<long>(n_test), edges.end());
  s.graph = g;
  s.graph.arcs.clear();
  for (const auto& [u, v] : s.train_pos) {
    s.graph.arcs.emplace_back(u, v);
    s.graph.arcs.emplace_back(v, u);
  }

  std::vector<std::pair<std::size_t, std::size_t>> non_edges;
  std::set<std::pair<std::size_t, std::size_t>> edge_set(edges.begin(), edges.end());
  for (std::size_t u = 0; u < g.n; ++u)
    for (std::size_t v = u + 1; v < g.n; ++v)
      if (!edge_set.contains({u, v})) non_edges.emplace_back(u, v);
  std::shuffle(non_edges.begin(), non_edges.end(), rng);
  const std::size_t t = std::min(n_test, non_edges.size());
  s.test_neg.assign(non_edges.begin(), non_edges.begin() + static_cast<long>(t));
  const std::size_t r = std::min(s.train_pos.size(), non_edges.size() - t);
  s.train_neg.assign(non_edges.begin() + static_cast<long>(t),
                     non_edges.begin() + static_cast<long>(t + r));
  return s;
}

NodeSplit split_nodes(const GraphDataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    throw ArgumentError("split_nodes: train_fraction must lie in (0, 1)");
  std::mt19937_64 rng(seed);
  NodeSplit s;
  for (const Graph& g : ds.graphs) {
    std::vector<std::size_t> nodes(g.n);
    std::iota(nodes.begin(), nodes.end(), std::size_t{0});
    std::shuffle(nodes.begin(), nodes.end(), rng);
    std::size_t k = static_cast<std::size_t>(std::llround(static_cast<double>(g.n) * train_fraction));
    if (g.n >= 2) k = std::clamp<std::size_t>(k, 1, g.n - 1);
    std::vector<std::size_t> tr(nodes.begin(), nodes.begin() + static_cast<long>(k));
    std::vector<std::size_t> te(nodes.begin() + static_cast<long>(k), nodes.end());
    std::sort(tr.begin(), tr.end());
    std::sort(te.begin(), te.end());
    s.train_nodes.push_back(std::move(tr));
    s.test_nodes.push_back(std::move(te));
  }
  return s;
}

}  // namespace damoe
