#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "damoe/autodiff.hpp"
#include "damoe/graph.hpp"
#include "damoe/params.hpp"

namespace damoe {

enum class Backbone { gcn, gin };
enum class Readout { mean, sum };

std::string_view to_string(Backbone b);
Backbone parse_backbone(std::string_view s);
std::string_view to_string(Readout r);
Readout parse_readout(std::string_view s);
// mean for GCN, sum for GIN
Readout default_readout(Backbone b);

// Per-graph constants computed once per dataset.
struct GraphContext {
  Matrix norm_adj;
  std::vector<std::size_t> src, dst;  // arc endpoints
};
GraphContext make_context(const Graph& g);

// The graph's constants placed on one tape, shared by every module during a
// forward pass.
class GraphInput {
 public:
  GraphInput(ad::Tape& tape, const Graph& g, const GraphContext& ctx);

  const Graph& graph() const { return *graph_; }
  const GraphContext& context() const { return *ctx_; }
  std::size_t n() const { return graph_->n; }
  ad::Var x() const { return x_; }
  ad::Var adjacency();
  // sum over u in N(v) of h_u, for every v
  ad::Var neighbor_sum(ad::Var h);

 private:
  ad::Tape* tape_;
  const Graph* graph_;
  const GraphContext* ctx_;
  ad::Var x_;
  ad::Var adj_;
  ad::Var x_sum_;
};

struct Linear {
  std::size_t weight = 0, bias = 0;
  std::size_t in = 0, out = 0;
};
Linear make_linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out,
                   std::mt19937_64& rng);
ad::Var linear_forward(Binder& bind, const Linear& l, ad::Var x);

// relu(A_hat H W + b)
struct GcnLayer {
  std::size_t weight = 0, bias = 0;
  std::size_t in = 0, out = 0;
};

// mlp((1 + eps) h_v + sum_{u in N(v)} h_u), mlp = W2 relu(W1 x + b1) + b2
struct GinLayer {
  std::size_t eps = 0;
  Linear fc1, fc2;
  std::size_t in = 0, out = 0;
};

GcnLayer make_gcn_layer(ParameterStore& store, const std::string& prefix, std::size_t in,
                        std::size_t out, std::mt19937_64& rng);
GinLayer make_gin_layer(ParameterStore& store, const std::string& prefix, std::size_t in,
                        std::size_t out, std::mt19937_64& rng);

ad::Var gcn_forward(Binder& bind, const GcnLayer& layer, ad::Var h, GraphInput& g);
ad::Var gin_forward(Binder& bind, const GinLayer& layer, ad::Var h, GraphInput& g);

using GnnLayer = std::variant<GcnLayer, GinLayer>;

// A depth-L GNN with its own parameters.
struct ExpertGnn {
  Backbone backbone = Backbone::gcn;
  std::vector<GnnLayer> layers;
  Readout readout = Readout::mean;

  std::size_t depth() const { return layers.size(); }
  std::size_t out_dim() const;
  std::vector<std::size_t> parameter_ids() const;
};

// Parameters are named "expert/<index>/layer/<l>/<tensor>".
ExpertGnn make_expert(ParameterStore& store, std::size_t index, Backbone backbone, std::size_t depth,
                      std::size_t in_dim, std::size_t hidden, Readout readout, std::mt19937_64& rng);

ad::Var readout(ad::Var h, Readout r);
// n x hidden node embeddings after the last layer.
ad::Var expert_forward_node(Binder& bind, const ExpertGnn& e, GraphInput& g);
// 1 x hidden graph embedding: readout over expert_forward_node.
ad::Var expert_forward_graph(Binder& bind, const ExpertGnn& e, GraphInput& g);

}  // namespace damoe
