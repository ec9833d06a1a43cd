#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "damoe/matrix.hpp"

namespace damoe {

enum class Task { graph_classification, graph_regression, node_classification, link_prediction };

std::string_view to_string(Task t);
Task parse_task(std::string_view s);
inline bool is_graph_level(Task t) {
  return t == Task::graph_classification || t == Task::graph_regression;
}

// Undirected graph. Every edge is stored as two arcs (u,v) and (v,u);
// self-loops and duplicate arcs are not stored.
struct Graph {
  std::size_t id = 0;  // position in the dataset it was loaded or generated into
  std::size_t n = 0;
  std::vector<std::pair<std::size_t, std::size_t>> arcs;
  Matrix x;  // n x d
  int label = 0;
  double target = 0.0;  // regression target
  std::vector<int> node_labels;

  // Adds both arcs; ignores self-loops and already-present edges.
  void add_edge(std::size_t u, std::size_t v);
  bool has_edge(std::size_t u, std::size_t v) const;
  std::size_t edge_count() const { return arcs.size() / 2; }
  std::vector<std::size_t> degrees() const;
  std::vector<std::vector<std::size_t>> adjacency_list() const;
  // Throws FormatError on a violated invariant (endpoint range, symmetry, X rows).
  void validate() const;
};

struct GraphDataset {
  std::string name;
  std::vector<Graph> graphs;
  std::size_t feature_dim = 0;
  Task task = Task::graph_classification;
  int num_classes = 0;  // 0 for regression

  std::size_t size() const { return graphs.size(); }
  void validate() const;
};

enum class ScaleBucket { small = 0, medium = 1, large = 2 };
inline constexpr std::array<ScaleBucket, 3> kAllBuckets{ScaleBucket::small, ScaleBucket::medium,
                                                        ScaleBucket::large};
std::string_view to_string(ScaleBucket b);
// small: n < 15, medium: 15 <= n <= 25, large: n > 25.
ScaleBucket bucket_of(std::size_t n);

// Graph indices per bucket; all three keys are always present.
using BucketMap = std::map<ScaleBucket, std::vector<std::size_t>>;
BucketMap bucket_by_scale(const GraphDataset& ds);

struct LoadOptions {
  Task task = Task::graph_classification;
  std::size_t degree_cap = 10;
};

// Reads DS_A.txt, DS_graph_indicator.txt, DS_graph_labels.txt and, when
// present, DS_node_labels.txt and DS_node_attributes.txt from `dir`.
//
// Features are the concatenation of the node-label one-hot and the node
// attributes, whichever exist. With neither, a one-hot of min(degree, cap)
// is used. For node classification the node labels become targets and are
// not used as features.
GraphDataset load_tu_dataset(const std::filesystem::path& dir, const std::string& name,
                             const LoadOptions& opts = {});

// Writes the dataset in the same text format. X is stored as node attributes.
void write_tu_dataset(const GraphDataset& ds, const std::filesystem::path& dir);

// {name, task, feature_dim, num_classes, counts}
std::string dataset_manifest_json(const GraphDataset& ds);
struct DatasetManifest {
  std::string name;
  Task task = Task::graph_classification;
  std::size_t feature_dim = 0;
  int num_classes = 0;
  std::size_t graphs = 0;
};
DatasetManifest read_dataset_manifest(const std::filesystem::path& file);

// Content hash over structure, features and labels.
std::uint64_t dataset_fingerprint(const GraphDataset& ds);

// Radius used by the synthetic generator: grows with n from 1 (n = 6) to
// max_hops (n = 40).
int hop_radius_for_size(std::size_t n, int max_hops);

// Random trees and unicyclic graphs with 6..40 nodes. Two nodes carry a
// marker (feature column 0); the label is 1 iff their shortest-path distance
// is at most hop_radius_for_size(n). Column 1, if present, is a constant 1;
// further columns are uniform [0,1) nuisance features.
GraphDataset generate_depth_sensitive_dataset(std::size_t count, std::uint64_t seed,
                                              std::size_t d_feature = 1, int max_hops = 8);

struct DatasetSplit {
  GraphDataset train;
  GraphDataset test;
  bool stratified = false;
};

// Seeded shuffle into a disjoint cover. Classification datasets are
// stratified by class unless some class has fewer than two graphs, in which
// case a warning goes to stderr and the split is unstratified.
DatasetSplit split_dataset(const GraphDataset& ds, double train_fraction, std::uint64_t seed);

// D^-1/2 (A + I) D^-1/2 with D the degree of A + I.
Matrix normalized_adjacency(const Graph& g);

// Link prediction view of one graph: a seeded fraction of edges is hidden as
// positive test pairs and an equal number of non-edges sampled as negatives.
// Training pairs are the remaining edges and as many sampled non-edges.
struct LinkSplit {
  Graph graph;  // training edges only
  std::vector<std::pair<std::size_t, std::size_t>> train_pos, train_neg, test_pos, test_neg;
};
LinkSplit make_link_split(const Graph& g, double test_fraction, std::uint64_t seed);

// Per-graph train/test node masks for node classification.
struct NodeSplit {
  std::vector<std::vector<std::size_t>> train_nodes, test_nodes;
};
NodeSplit split_nodes(const GraphDataset& ds, double train_fraction, std::uint64_t seed);

// BFS hop distances from `source`; unreachable nodes get -1.
std::vector<int> bfs_distances(const Graph& g, std::size_t source);

}  // namespace damoe
