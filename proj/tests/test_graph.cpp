#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>

#include "damoe/errors.hpp"
#include "damoe/graph.hpp"
#include "oracles.hpp"

using namespace damoe;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path = fs::temp_directory_path() / ("damoe_test_" + tag + "_" + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  void write(const std::string& file, const std::string& text) const {
    std::ofstream(path / file) << text;
  }
};

// graph 1: triangle on nodes 1..3; graph 2: single edge 4-5
void write_toy(const TempDir& d, bool with_labels = true) {
  d.write("TOY_A.txt", "1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n");
  d.write("TOY_graph_indicator.txt", "1\n1\n1\n2\n2\n");
  d.write("TOY_graph_labels.txt", "1\n2\n");
  if (with_labels) d.write("TOY_node_labels.txt", "0\n1\n0\n2\n2\n");
}

}  // namespace

TEST_CASE("TU loader reads the two-graph fixture") {
  TempDir d("toy");
  write_toy(d);
  const GraphDataset ds = load_tu_dataset(d.path, "TOY");
  REQUIRE(ds.size() == 2);
  CHECK(ds.graphs[0].n == 3);
  CHECK(ds.graphs[1].n == 2);
  CHECK(ds.graphs[0].label == 0);
  CHECK(ds.graphs[1].label == 1);
  CHECK(ds.graphs[0].edge_count() == 3);
  CHECK(ds.graphs[1].edge_count() == 1);
  CHECK(ds.num_classes == 2);
  // node labels {0,1,2} one-hot
  CHECK(ds.feature_dim == 3);
  CHECK(ds.graphs[0].x == Matrix{{1, 0, 0}, {0, 1, 0}, {1, 0, 0}});
  for (const Graph& g : ds.graphs) CHECK_NOTHROW(g.validate());
}

TEST_CASE("TU loader falls back to capped degree one-hot") {
  TempDir d("deg");
  write_toy(d, false);
  const GraphDataset ds = load_tu_dataset(d.path, "TOY");
  CHECK(ds.feature_dim == 11);
  for (std::size_t v = 0; v < 3; ++v)
    for (std::size_t c = 0; c < 11; ++c) CHECK(ds.graphs[0].x(v, c) == (c == 2 ? 1.0 : 0.0));

  TempDir s("cap");
  std::string a, ind;
  for (int v = 2; v <= 14; ++v) a += "1, " + std::to_string(v) + "\n";
  for (int v = 1; v <= 14; ++v) ind += "1\n";
  s.write("STAR_A.txt", a);
  s.write("STAR_graph_indicator.txt", ind);
  s.write("STAR_graph_labels.txt", "0\n");
  LoadOptions opts;
  opts.degree_cap = 4;
  const GraphDataset star = load_tu_dataset(s.path, "STAR", opts);
  CHECK(star.feature_dim == 5);
  CHECK(star.graphs[0].x(0, 4) == 1.0);  // degree 13 lands in the overflow bin
  CHECK(star.graphs[0].x(1, 1) == 1.0);
}

TEST_CASE("TU loader errors") {
  TempDir d("err");
  write_toy(d);
  fs::remove(d.path / "TOY_graph_labels.txt");
  try {
    load_tu_dataset(d.path, "TOY");
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("TOY_graph_labels.txt") != std::string::npos);
  }

  TempDir x("cross");
  write_toy(x);
  x.write("TOY_A.txt", "1, 2\n2, 1\n4, 1\n");
  try {
    load_tu_dataset(x.path, "TOY");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  TempDir m("missing");
  write_toy(m);
  m.write("TOY_A.txt", "1, 2\n2, 9\n");
  try {
    load_tu_dataset(m.path, "TOY");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("directed input edges are symmetrized") {
  TempDir d("dir");
  d.write("D_A.txt", "1, 2\n2, 3\n");
  d.write("D_graph_indicator.txt", "1\n1\n1\n");
  d.write("D_graph_labels.txt", "5\n");
  const GraphDataset ds = load_tu_dataset(d.path, "D");
  CHECK(ds.graphs[0].has_edge(1, 0));
  CHECK(ds.graphs[0].has_edge(2, 1));
  CHECK_NOTHROW(ds.graphs[0].validate());
}

TEST_CASE("scale buckets") {
  CHECK(bucket_of(14) == ScaleBucket::small);
  CHECK(bucket_of(15) == ScaleBucket::medium);
  CHECK(bucket_of(25) == ScaleBucket::medium);
  CHECK(bucket_of(26) == ScaleBucket::large);

  GraphDataset empty;
  const BucketMap none = bucket_by_scale(empty);
  CHECK(none.size() == 3);
  for (const auto& [b, idx] : none) CHECK(idx.empty());

  const GraphDataset ds = generate_depth_sensitive_dataset(120, 4);
  const BucketMap m = bucket_by_scale(ds);
  std::set<std::size_t> seen;
  for (const auto& [b, idx] : m)
    for (std::size_t i : idx) {
      CHECK(bucket_of(ds.graphs[i].n) == b);
      seen.insert(i);
    }
  CHECK(seen.size() == ds.size());
}

TEST_CASE("split_dataset") {
  GraphDataset ten = generate_depth_sensitive_dataset(10, 1);
  const DatasetSplit s = split_dataset(ten, 0.8, 3);
  CHECK(s.train.size() == 8);
  CHECK(s.test.size() == 2);

  const GraphDataset ds = generate_depth_sensitive_dataset(200, 5);
  const DatasetSplit a = split_dataset(ds, 0.8, 11), b = split_dataset(ds, 0.8, 11);
  std::vector<std::size_t> ia, ib;
  for (const Graph& g : a.train.graphs) ia.push_back(g.id);
  for (const Graph& g : b.train.graphs) ib.push_back(g.id);
  CHECK(ia == ib);

  // disjoint cover
  std::set<std::size_t> all;
  for (const Graph& g : a.train.graphs) all.insert(g.id);
  for (const Graph& g : a.test.graphs) CHECK(all.insert(g.id).second);
  CHECK(all.size() == ds.size());

  // stratified: per-class train count within one graph of the global fraction
  CHECK(a.stratified);
  std::map<int, int> total, train;
  for (const Graph& g : ds.graphs) ++total[g.label];
  for (const Graph& g : a.train.graphs) ++train[g.label];
  for (const auto& [label, n] : total) CHECK(std::abs(train[label] - 0.8 * n) <= 1.0);

  // bucket counts of train + test equal those of the full set
  const BucketMap full = bucket_by_scale(ds), tr = bucket_by_scale(a.train), te = bucket_by_scale(a.test);
  for (ScaleBucket bk : kAllBuckets) CHECK(full.at(bk).size() == tr.at(bk).size() + te.at(bk).size());

  // a singleton class forces the unstratified fallback
  GraphDataset odd = ten;
  odd.graphs[0].label = 7;
  odd.num_classes = 8;
  CHECK_FALSE(split_dataset(odd, 0.7, 2).stratified);
}

TEST_CASE("normalized adjacency") {
  Graph one;
  one.n = 1;
  CHECK(normalized_adjacency(one) == Matrix{{1.0}});

  Graph edge;
  edge.n = 2;
  edge.add_edge(0, 1);
  const Matrix e = normalized_adjacency(edge);
  for (double v : e.values()) CHECK(v == doctest::Approx(0.5).epsilon(1e-15));

  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const Graph g = oracle::random_graph(3 + trial, 0.2, 1, rng);
    const Matrix a = normalized_adjacency(g);
    const auto ref = oracle::normalized_adjacency(g);
    double worst = 0.0;
    for (std::size_t i = 0; i < g.n; ++i)
      for (std::size_t j = 0; j < g.n; ++j) {
        worst = std::max(worst, std::abs(a(i, j) - ref[i][j]));
        CHECK(a(i, j) == a(j, i));
      }
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("synthetic generator") {
  const GraphDataset a = generate_depth_sensitive_dataset(200, 42, 1, 8);
  const GraphDataset b = generate_depth_sensitive_dataset(200, 42, 1, 8);
  REQUIRE(a.size() == 200);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a.graphs[i].arcs == b.graphs[i].arcs);
    CHECK(a.graphs[i].x == b.graphs[i].x);
    CHECK(a.graphs[i].label == b.graphs[i].label);
  }

  int positives = 0;
  for (const Graph& g : a.graphs) {
    CHECK(g.n >= 6);
    CHECK(g.n <= 40);
    CHECK_NOTHROW(g.validate());
    // the two marked nodes, then the label recomputed by BFS
    std::vector<std::size_t> marked;
    for (std::size_t v = 0; v < g.n; ++v)
      if (g.x(v, 0) == 1.0) marked.push_back(v);
    REQUIRE(marked.size() == 2);
    const int d = oracle::bfs_distance(g, marked[0], marked[1]);
    CHECK(d >= 1);
    CHECK(g.label == (d <= hop_radius_for_size(g.n, 8) ? 1 : 0));
    // trees and unicyclic graphs only
    CHECK(g.edge_count() >= g.n - 1);
    CHECK(g.edge_count() <= g.n);
    positives += g.label;
  }
  const double balance = positives / 200.0;
  CHECK(balance >= 0.3);
  CHECK(balance <= 0.7);

  CHECK_THROWS_AS(generate_depth_sensitive_dataset(0, 1), ArgumentError);
  CHECK_THROWS_AS(generate_depth_sensitive_dataset(5, 1, 1, 1), ArgumentError);
}

TEST_CASE("hop radius grows with size") {
  CHECK(hop_radius_for_size(6, 4) == 1);
  CHECK(hop_radius_for_size(40, 4) == 4);
  for (std::size_t n = 7; n <= 40; ++n)
    CHECK(hop_radius_for_size(n, 8) >= hop_radius_for_size(n - 1, 8));
}

TEST_CASE("synthetic data round-trips through the TU format") {
  TempDir d("rt");
  const GraphDataset ds = generate_depth_sensitive_dataset(60, 3, 3, 4);
  write_tu_dataset(ds, d.path);
  const GraphDataset back = load_tu_dataset(d.path, ds.name);
  REQUIRE(back.size() == ds.size());
  std::multiset<int> la, lb;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Graph& g = ds.graphs[i];
    const Graph& h = back.graphs[i];
    CHECK(g.n == h.n);
    auto arcs_g = g.arcs, arcs_h = h.arcs;
    std::sort(arcs_g.begin(), arcs_g.end());
    std::sort(arcs_h.begin(), arcs_h.end());
    CHECK(arcs_g == arcs_h);
    CHECK(g.x == h.x);
    la.insert(g.label);
    lb.insert(h.label);
  }
  CHECK(la == lb);
  CHECK(dataset_fingerprint(ds) == dataset_fingerprint(back));
  const DatasetManifest m = read_dataset_manifest(d.path / (ds.name + "_manifest.json"));
  CHECK(m.graphs == 60);
  CHECK(m.feature_dim == 3);
}

TEST_CASE("link split hides edges") {
  std::mt19937_64 rng(3);
  const Graph g = oracle::random_graph(30, 0.15, 2, rng);
  const LinkSplit s = make_link_split(g, 0.1, 5);
  CHECK(s.test_pos.size() >= 1);
  CHECK(s.test_neg.size() == s.test_pos.size());
  CHECK(s.train_pos.size() + s.test_pos.size() == g.edge_count());
  for (const auto& [u, v] : s.test_pos) {
    CHECK(g.has_edge(u, v));
    CHECK_FALSE(s.graph.has_edge(u, v));
  }
  for (const auto& [u, v] : s.test_neg) CHECK_FALSE(g.has_edge(u, v));
}
