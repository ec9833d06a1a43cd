#include "damoe/layers.hpp"

#include "damoe/errors.hpp"

namespace damoe {

std::string_view to_string(Backbone b) { return b == Backbone::gcn ? "gcn" : "gin"; }

Backbone parse_backbone(std::string_view s) {
  if (s == "gcn") return Backbone::gcn;
  if (s == "gin") return Backbone::gin;
  throw ConfigError("unknown backbone '" + std::string(s) + "' (expected gcn or gin)");
}

std::string_view to_string(Readout r) { return r == Readout::mean ? "mean" : "sum"; }

Readout parse_readout(std::string_view s) {
  if (s == "mean") return Readout::mean;
  if (s == "sum") return Readout::sum;
  throw ConfigError("unknown readout '" + std::string(s) + "' (expected mean or sum)");
}

Readout default_readout(Backbone b) { return b == Backbone::gcn ? Readout::mean : Readout::sum; }

GraphContext make_context(const Graph& g) {
  GraphContext c;
  c.norm_adj = normalized_adjacency(g);
  c.src.reserve(g.arcs.size());
  c.dst.reserve(g.arcs.size());
  for (const auto& [u, v] : g.arcs) {
    c.src.push_back(u);
    c.dst.push_back(v);
  }
  return c;
}

GraphInput::GraphInput(ad::Tape& tape, const Graph& g, const GraphContext& ctx)
    : tape_(&tape), graph_(&g), ctx_(&ctx), x_(tape.constant(g.x)) {}

ad::Var GraphInput::adjacency() {
  if (!adj_.valid()) adj_ = tape_->constant(ctx_->norm_adj);
  return adj_;
}

ad::Var GraphInput::neighbor_sum(ad::Var h) {
  // the gate and a first GIN layer both aggregate the raw features
  const bool raw = h.node() == x_.node();
  if (raw && x_sum_.valid()) return x_sum_;
  // message from u lands on v for every arc (u, v)
  ad::Var s = ad::scatter_add_rows(ad::gather_rows(h, ctx_->src), ctx_->dst, graph_->n);
  if (raw) x_sum_ = s;
  return s;
}

Linear make_linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                   std::mt19937_64& rng) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = store.add_glorot(prefix + "/W", in, out, rng);
  l.bias = store.add(prefix + "/b", Matrix(1, out));
  return l;
}

ad::Var linear_forward(Binder& bind, const Linear& l, ad::Var x) {
  if (x.cols() != l.in)
    throw DimensionError("linear: input " + x.value().shape_string() + " for weight " +
                         std::to_string(l.in) + "x" + std::to_string(l.out));
  return ad::add(ad::matmul(x, bind(l.weight)), bind(l.bias));
}

GcnLayer make_gcn_layer(ParameterStore& store, const std::string& prefix, std::size_t in,
                        std::size_t out, std::mt19937_64& rng) {
  GcnLayer l;
  l.in = in;
  l.out = out;
  l.weight = store.add_glorot(prefix + "/W", in, out, rng);
  l.bias = store.add(prefix + "/b", Matrix(1, out));
  return l;
}

GinLayer make_gin_layer(ParameterStore& store, const std::string& prefix, std::size_t in,
                        std::size_t out, std::mt19937_64& rng) {
  GinLayer l;
  l.in = in;
  l.out = out;
  l.eps = store.add(prefix + "/eps", Matrix(1, 1));
  l.fc1 = make_linear(store, prefix + "/mlp1", in, out, rng);
  l.fc2 = make_linear(store, prefix + "/mlp2", out, out, rng);
  return l;
}

ad::Var gcn_forward(Binder& bind, const GcnLayer& layer, ad::Var h, GraphInput& g) {
  if (h.cols() != layer.in || h.rows() != g.n())
    throw DimensionError("gcn layer: input " + h.value().shape_string() + ", expected " +
                         std::to_string(g.n()) + "x" + std::to_string(layer.in));
  ad::Var hw = ad::matmul(h, bind(layer.weight));
  return ad::relu(ad::add(ad::matmul(g.adjacency(), hw), bind(layer.bias)));
}

ad::Var gin_forward(Binder& bind, const GinLayer& layer, ad::Var h, GraphInput& g) {
  if (h.cols() != layer.in || h.rows() != g.n())
    throw DimensionError("gin layer: input " + h.value().shape_string() + ", expected " +
                         std::to_string(g.n()) + "x" + std::to_string(layer.in));
  ad::Var self = ad::mul(ad::add_scalar(bind(layer.eps), 1.0), h);
  ad::Var z = ad::add(self, g.neighbor_sum(h));
  return linear_forward(bind, layer.fc2, ad::relu(linear_forward(bind, layer.fc1, z)));
}

std::size_t ExpertGnn::out_dim() const {
  return std::visit([](const auto& l) { return l.out; }, layers.back());
}

std::vector<std::size_t> ExpertGnn::parameter_ids() const {
  std::vector<std::size_t> ids;
  for (const GnnLayer& layer : layers) {
    if (const auto* c = std::get_if<GcnLayer>(&layer)) {
      ids.insert(ids.end(), {c->weight, c->bias});
    } else {
      const auto& n = std::get<GinLayer>(layer);
      ids.insert(ids.end(), {n.eps, n.fc1.weight, n.fc1.bias, n.fc2.weight, n.fc2.bias});
    }
  }
  return ids;
}

ExpertGnn make_expert(ParameterStore& store, std::size_t index, Backbone backbone, std::size_t depth,
                      std::size_t in_dim, std::size_t hidden, Readout readout, std::mt19937_64& rng) {
  if (depth == 0) throw ConfigError("expert depth must be at least 1");
  ExpertGnn e;
  e.backbone = backbone;
  e.readout = readout;
  for (std::size_t l = 0; l < depth; ++l) {
    const std::string prefix = "expert/" + std::to_string(index) + "/layer/" + std::to_string(l);
    const std::size_t in = l == 0 ? in_dim : hidden;
    if (backbone == Backbone::gcn)
      e.layers.emplace_back(make_gcn_layer(store, prefix, in, hidden, rng));
    else
      e.layers.emplace_back(make_gin_layer(store, prefix, in, hidden, rng));
  }
  return e;
}

ad::Var readout(ad::Var h, Readout r) {
  return r == Readout::mean ? ad::mean_rows(h) : ad::sum_rows(h);
}

ad::Var expert_forward_node(Binder& bind, const ExpertGnn& e, GraphInput& g) {
  ad::Var h = g.x();
  for (const GnnLayer& layer : e.layers)
    h = std::visit([&](const auto& l) {
      if constexpr (std::is_same_v<std::decay_t<decltype(l)>, GcnLayer>)
        return gcn_forward(bind, l, h, g);
      else
        return gin_forward(bind, l, h, g);
    }, layer);
  return h;
}

ad::Var expert_forward_graph(Binder& bind, const ExpertGnn& e, GraphInput& g) {
  return readout(expert_forward_node(bind, e, g), e.readout);
}

}  // namespace damoe
