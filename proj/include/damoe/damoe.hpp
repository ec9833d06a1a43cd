#pragma once

// The DA-MoE block: a structure-aware noisy top-k gate choosing among GNN
// experts of depths 1..s, and the weighted mixture of the chosen experts.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include "damoe/autodiff.hpp"
#include "damoe/layers.hpp"
#include "damoe/params.hpp"

namespace damoe {

enum class GatingMode { structure, linear };
enum class Level { graph, node };

std::string_view to_string(GatingMode m);
GatingMode parse_gating_mode(std::string_view s);

// Scores experts from t_v = fc((1 + alpha) x_v + sum_{u in N(v)} x_u).
// In linear mode t_v = fc(x_v) and alpha is unused.
struct GatingNetwork {
  std::size_t alpha = 0;
  Linear fc1, fc2;  // d -> hidden -> s, relu between
  std::size_t k = 1;
  std::size_t s = 1;
  bool noise_enabled = true;
  GatingMode mode = GatingMode::structure;
};

GatingNetwork make_gating_network(ParameterStore& store, std::size_t in_dim, std::size_t hidden,
                                  std::size_t s, std::size_t k, bool noise, GatingMode mode,
                                  std::mt19937_64& rng);

struct GatingOutput {
  Matrix clean;     // T: 1 x s (graph level) or n x s (node level)
  Matrix noisy;     // U
  std::vector<std::vector<std::size_t>> selected;  // per row, ascending
  Matrix weights;   // Q, zero outside the selection
  Matrix load_prob; // P
  Matrix z_draws;   // empty when no noise was applied
};

// Tape handles behind a GatingOutput.
struct GatingResult {
  GatingOutput out;
  ad::Var clean, noisy, weights, load_prob;
};

// Indices of the k largest entries, ties broken towards the lower index,
// returned in ascending order.
std::vector<std::size_t> top_k_indices(std::span<const double> row, std::size_t k);

// Standard-normal draws shaped rows x s.
Matrix draw_noise(std::size_t rows, std::size_t s, std::mt19937_64& rng);
std::size_t gating_rows(Level level, const Graph& g);

// z == nullptr means U = T. Otherwise z must have gating_rows() x s entries
// and U = T + z * softplus(T). Without with_load_prob, P is left empty.
GatingResult gating_scores(Binder& bind, const GatingNetwork& gate, GraphInput& g, Level level,
                           const Matrix* z, bool with_load_prob = true);
// Draws z from rng when gate.noise_enabled and training.
GatingResult gating_scores(Binder& bind, const GatingNetwork& gate, GraphInput& g, Level level,
                           std::mt19937_64& rng, bool training);

// P_i = Phi((T_i - tau_i) / noise_std_i), tau_i the k-th largest of U with
// entry i removed; 1 when k > s - 1.
std::vector<double> compute_load_probability(std::span<const double> clean,
                                             std::span<const double> noisy, std::size_t k,
                                             std::span<const double> noise_std);
// Tape version with noise_std = softplus(T), row by row.
ad::Var load_probability(ad::Var clean, ad::Var noisy, std::size_t k);

struct MixtureOutput {
  ad::Var h;  // 1 x d (graph level) or n x d (node level)
  GatingResult gating;
  std::vector<std::size_t> executed;  // experts whose forward pass ran
};

// h = sum over selected i of Q_i * E_i. Only experts selected by at least one
// row are evaluated.
MixtureOutput mixture_forward(Binder& bind, const GatingNetwork& gate,
                              std::span<const ExpertGnn> experts, GraphInput& g, Level level,
                              const Matrix* z, bool with_load_prob = true);

struct ModelSpec {
  Backbone backbone = Backbone::gcn;
  std::size_t in_dim = 0;
  std::size_t hidden = 64;
  std::size_t out_dim = 2;  // 0: no output head (link prediction embeddings)
  std::size_t experts = 4;
  std::size_t k = 2;
  std::size_t gate_hidden = 32;
  Readout readout = Readout::mean;
  bool noise = true;
  GatingMode gating = GatingMode::structure;
  Level level = Level::graph;
  // > 0 builds a plain single GNN of this depth instead of the mixture.
  std::size_t fixed_depth = 0;
  std::uint64_t seed = 0;
};

// A single DA-MoE block (expert i has depth i + 1) followed by a linear head,
// or a fixed-depth baseline GNN with the same head.
class DaMoeModel {
 public:
  explicit DaMoeModel(const ModelSpec& spec);

  struct Forward {
    ad::Var out;
    std::optional<GatingResult> gating;
    ad::Var q_total;  // 1 x s column totals of Q (invalid for baselines)
    ad::Var p_total;
    std::vector<std::size_t> executed;
  };

  Forward forward(Binder& bind, GraphInput& g, const Matrix* z) const;
  // Gate only, for the batch balancing terms.
  GatingResult gate_forward(Binder& bind, GraphInput& g, const Matrix* z) const;

  bool is_mixture() const { return spec_.fixed_depth == 0; }
  std::size_t noise_rows(const Graph& g) const { return gating_rows(spec_.level, g); }
  bool uses_noise() const { return is_mixture() && spec_.noise; }

  const ModelSpec& spec() const { return spec_; }
  ParameterStore& params() { return params_; }
  const ParameterStore& params() const { return params_; }
  const std::vector<ExpertGnn>& experts() const { return experts_; }
  const GatingNetwork& gate() const { return gate_; }
  const std::optional<Linear>& head() const { return head_; }

 private:
  ModelSpec spec_;
  ParameterStore params_;
  std::vector<ExpertGnn> experts_;
  GatingNetwork gate_;
  std::optional<Linear> head_;
};

}  // namespace damoe
