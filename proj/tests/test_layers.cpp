#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "damoe/damoe.hpp"
#include "damoe/errors.hpp"
#include "damoe/layers.hpp"
#include "oracles.hpp"

using namespace damoe;
using namespace damoe::ad;

namespace {

Var weighted_sum(Tape& t, Var v) {
  Matrix w(v.rows(), v.cols());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::sin(1.0 + static_cast<double>(i));
  return sum(mul(v, t.constant(w)));
}

Matrix node_output(const ParameterStore& store, const ExpertGnn& e, const Graph& g) {
  const GraphContext ctx = make_context(g);
  Tape t(false);
  Binder bind(t, store);
  GraphInput in(t, g, ctx);
  return expert_forward_node(bind, e, in).value();
}

Matrix graph_output(const ParameterStore& store, const ExpertGnn& e, const Graph& g) {
  const GraphContext ctx = make_context(g);
  Tape t(false);
  Binder bind(t, store);
  GraphInput in(t, g, ctx);
  return expert_forward_graph(bind, e, in).value();
}

Graph permuted(const Graph& g, const std::vector<std::size_t>& perm) {
  // node v of g becomes node perm[v]
  Graph h;
  h.n = g.n;
  for (const auto& [u, v] : g.arcs)
    if (u < v) h.add_edge(perm[u], perm[v]);
  h.x = Matrix(g.n, g.x.cols());
  for (std::size_t v = 0; v < g.n; ++v)
    for (std::size_t c = 0; c < g.x.cols(); ++c) h.x(perm[v], c) = g.x(v, c);
  return h;
}

}  // namespace

TEST_CASE("gcn layer special cases") {
  std::mt19937_64 rng(1);
  ParameterStore store;
  const GcnLayer layer = make_gcn_layer(store, "gcn", 3, 3, rng);
  store[layer.weight].value = Matrix::identity(3);
  store[layer.bias].value = Matrix(1, 3, 0.0);

  Graph single;
  single.n = 1;
  single.x = {{-1.0, 2.0, 0.5}};
  const GraphContext ctx = make_context(single);
  Tape t;
  Binder bind(t, store);
  GraphInput in(t, single, ctx);
  CHECK(gcn_forward(bind, layer, in.x(), in).value() == Matrix{{0.0, 2.0, 0.5}});

  store[layer.bias].value = {{0.3, -0.2, 1.1}};
  Graph tri = oracle::random_graph(3, 1.0, 3, rng);
  tri.x = Matrix(3, 3);
  const GraphContext c2 = make_context(tri);
  Tape t2;
  Binder b2(t2, store);
  GraphInput in2(t2, tri, c2);
  CHECK(gcn_forward(b2, layer, in2.x(), in2).value() ==
        Matrix{{0.3, 0.0, 1.1}, {0.3, 0.0, 1.1}, {0.3, 0.0, 1.1}});

  Tape t3;
  Binder b3(t3, store);
  GraphInput in3(t3, tri, c2);
  CHECK_THROWS_AS(gcn_forward(b3, layer, t3.constant(Matrix(3, 2)), in3), DimensionError);
}

TEST_CASE("gcn layer gradient") {
  std::mt19937_64 rng(2);
  ParameterStore store;
  const GcnLayer layer = make_gcn_layer(store, "gcn", 3, 4, rng);
  const Graph g = oracle::random_graph(5, 0.3, 3, rng);
  const GraphContext ctx = make_context(g);
  auto build = [&](Tape& t, Binder& b) {
    GraphInput in(t, g, ctx);
    return weighted_sum(t, gcn_forward(b, layer, in.x(), in));
  };
  const auto grads = oracle::parameter_gradients(store, build);
  const double err = oracle::parameter_gradient_check(store, grads, [&] {
    Tape t;
    Binder b(t, store);
    return build(t, b).item();
  });
  CHECK(err < 1e-4);
}

TEST_CASE("gin layer special cases and gradient") {
  std::mt19937_64 rng(3);
  ParameterStore store;
  const GinLayer layer = make_gin_layer(store, "gin", 2, 4, rng);
  store[layer.eps].value = Matrix::scalar(0.0);

  Graph empty;
  empty.n = 3;
  empty.x = oracle::random_matrix(3, 2, rng);
  const GraphContext ce = make_context(empty);
  Tape t;
  Binder b(t, store);
  GraphInput in(t, empty, ce);
  const Matrix out = gin_forward(b, layer, in.x(), in).value();
  for (std::size_t v = 0; v < 3; ++v) {
    Tape tv;
    Binder bv(tv, store);
    Var row = tv.constant(Matrix::row(empty.x.row_span(v)));
    const Matrix mlp = linear_forward(bv, layer.fc2, relu(linear_forward(bv, layer.fc1, row))).value();
    for (std::size_t c = 0; c < 4; ++c) CHECK(out(v, c) == mlp(0, c));
  }

  Graph tri;
  tri.n = 3;
  tri.add_edge(0, 1);
  tri.add_edge(1, 2);
  tri.add_edge(0, 2);
  tri.x = Matrix{{0.4, -0.7}, {0.4, -0.7}, {0.4, -0.7}};
  const GraphContext ct = make_context(tri);
  Tape t2;
  Binder b2(t2, store);
  GraphInput in2(t2, tri, ct);
  const Matrix sym = gin_forward(b2, layer, in2.x(), in2).value();
  for (std::size_t v = 1; v < 3; ++v)
    for (std::size_t c = 0; c < 4; ++c) CHECK(sym(v, c) == sym(0, c));

  store[layer.eps].value = Matrix::scalar(0.37);
  const Graph g = oracle::random_graph(6, 0.3, 2, rng);
  const GraphContext ctx = make_context(g);
  auto build = [&](Tape& tp, Binder& bd) {
    GraphInput gi(tp, g, ctx);
    return weighted_sum(tp, gin_forward(bd, layer, gi.x(), gi));
  };
  const auto grads = oracle::parameter_gradients(store, build);
  CHECK(grads[layer.eps][0] != 0.0);
  CHECK(oracle::parameter_gradient_check(store, grads, [&] {
          Tape tp;
          Binder bd(tp, store);
          return build(tp, bd).item();
        }) < 1e-4);
}

TEST_CASE("expert readout behaviour") {
  std::mt19937_64 rng(4);
  for (Backbone bb : {Backbone::gcn, Backbone::gin}) {
    ParameterStore store;
    const ExpertGnn mean_e = make_expert(store, 0, bb, 1, 2, 5, Readout::mean, rng);
    ExpertGnn sum_e = mean_e;
    sum_e.readout = Readout::sum;

    Graph single;
    single.n = 1;
    single.x = {{0.3, -0.9}};
    CHECK(graph_output(store, mean_e, single) == node_output(store, mean_e, single));

    Graph pair;
    pair.n = 2;
    pair.add_edge(0, 1);
    pair.x = {{0.3, -0.9}, {1.2, 0.4}};
    const Matrix m = graph_output(store, mean_e, pair), s = graph_output(store, sum_e, pair);
    for (std::size_t c = 0; c < m.cols(); ++c) CHECK(s(0, c) == doctest::Approx(2.0 * m(0, c)).epsilon(1e-15));

    // depth 1 node output is the single layer's output
    const GraphContext ctx = make_context(pair);
    Tape t(false);
    Binder b(t, store);
    GraphInput in(t, pair, ctx);
    const Matrix layer_out =
        bb == Backbone::gcn ? gcn_forward(b, std::get<GcnLayer>(mean_e.layers[0]), in.x(), in).value()
                            : gin_forward(b, std::get<GinLayer>(mean_e.layers[0]), in.x(), in).value();
    CHECK(node_output(store, mean_e, pair) == layer_out);

    // graph output is the readout of the node output
    const ExpertGnn deep = make_expert(store, 1, bb, 3, 2, 5, Readout::mean, rng);
    const Graph g = oracle::random_graph(9, 0.2, 2, rng);
    const Matrix nodes = node_output(store, deep, g);
    CHECK(nodes.rows() == g.n);
    Tape tr(false);
    CHECK(graph_output(store, deep, g) == mean_rows(tr.constant(nodes)).value());
  }
}

TEST_CASE("receptive field on a path graph") {
  std::mt19937_64 rng(5);
  for (Backbone bb : {Backbone::gcn, Backbone::gin}) {
    for (std::size_t depth = 1; depth <= 4; ++depth) {
      ParameterStore store;
      const ExpertGnn e = make_expert(store, 0, bb, depth, 1, 6, Readout::mean, rng);
      Graph path = oracle::path_graph(12, 1);
      const Matrix before = node_output(store, e, path);
      path.x(0, 0) = 1.0;  // marker at node 0
      const Matrix after = node_output(store, e, path);
      for (std::size_t v = depth + 1; v < 12; ++v)
        for (std::size_t c = 0; c < 6; ++c) CHECK(before(v, c) == after(v, c));
    }
  }
}

TEST_CASE("parameter count law") {
  std::mt19937_64 rng(6);
  for (Backbone bb : {Backbone::gcn, Backbone::gin}) {
    std::size_t separate = 0;
    for (std::size_t depth = 1; depth <= 4; ++depth) {
      ParameterStore s;
      make_expert(s, 0, bb, depth, 3, 8, Readout::mean, rng);
      separate += s.scalar_count();
    }
    ParameterStore block;
    std::vector<ExpertGnn> experts;
    for (std::size_t i = 0; i < 4; ++i) experts.push_back(make_expert(block, i, bb, i + 1, 3, 8, Readout::mean, rng));
    CHECK(block.scalar_count() == separate);
    std::vector<std::size_t> ids;
    for (const auto& e : experts)
      for (std::size_t id : e.parameter_ids()) ids.push_back(id);
    std::sort(ids.begin(), ids.end());
    CHECK(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
    for (std::size_t i = 0; i < 4; ++i) CHECK(experts[i].depth() == i + 1);
  }
}

TEST_CASE("permutation equivariance") {
  std::mt19937_64 rng(7);
  for (Backbone bb : {Backbone::gcn, Backbone::gin}) {
    ParameterStore store;
    const ExpertGnn e = make_expert(store, 0, bb, 3, 2, 5, default_readout(bb), rng);
    for (int trial = 0; trial < 10; ++trial) {
      const Graph g = oracle::random_graph(8 + trial, 0.2, 2, rng);
      std::vector<std::size_t> perm(g.n);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      const Graph h = permuted(g, perm);
      const Matrix a = node_output(store, e, g), b = node_output(store, e, h);
      for (std::size_t v = 0; v < g.n; ++v)
        for (std::size_t c = 0; c < a.cols(); ++c) CHECK(std::abs(a(v, c) - b(perm[v], c)) < 1e-9);
      CHECK(max_abs_diff(graph_output(store, e, g), graph_output(store, e, h)) < 1e-9);
    }
  }
}
