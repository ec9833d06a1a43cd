#include "damoe/damoe.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "damoe/errors.hpp"

namespace damoe {

std::string_view to_string(GatingMode m) { return m == GatingMode::structure ? "structure" : "linear"; }

GatingMode parse_gating_mode(std::string_view s) {
  if (s == "structure") return GatingMode::structure;
  if (s == "linear") return GatingMode::linear;
  throw ConfigError("unknown gating '" + std::string(s) + "' (expected structure or linear)");
}

GatingNetwork make_gating_network(ParameterStore& store, std::size_t in_dim, std::size_t hidden,
                                  std::size_t s, std::size_t k, bool noise, GatingMode mode,
                                  std::mt19937_64& rng) {
  if (k < 1 || k > s)
    throw ConfigError("gating: need 1 <= k <= s, got k=" + std::to_string(k) +
                      " s=" + std::to_string(s));
  GatingNetwork gate;
  gate.k = k;
  gate.s = s;
  gate.noise_enabled = noise;
  gate.mode = mode;
  gate.alpha = store.add("gate/alpha", Matrix(1, 1));
  gate.fc1 = make_linear(store, "gate/fc1", in_dim, hidden, rng);
  gate.fc2 = make_linear(store, "gate/fc2", hidden, s, rng);
  return gate;
}

std::vector<std::size_t> top_k_indices(std::span<const double> row, std::size_t k) {
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return row[a] > row[b]; });
  order.resize(std::min(k, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

Matrix draw_noise(std::size_t rows, std::size_t s, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix z(rows, s);
  for (double& v : z.values()) v = normal(rng);
  return z;
}

std::size_t gating_rows(Level level, const Graph& g) { return level == Level::graph ? 1 : g.n; }

std::vector<double> compute_load_probability(std::span<const double> clean,
                                             std::span<const double> noisy, std::size_t k,
                                             std::span<const double> noise_std) {
  const std::size_t s = clean.size();
  if (noisy.size() != s || noise_std.size() != s)
    throw DimensionError("compute_load_probability: rows of different length");
  std::vector<double> p(s, 1.0);
  if (k + 1 > s) return p;
  std::vector<double> others;
  for (std::size_t i = 0; i < s; ++i) {
    others.clear();
    for (std::size_t j = 0; j < s; ++j)
      if (j != i) others.push_back(noisy[j]);
    std::nth_element(others.begin(), others.begin() + static_cast<long>(k - 1), others.end(),
                     std::greater<>());
    const double threshold = others[k - 1];
    const double x = (clean[i] - threshold) / noise_std[i];
    p[i] = 0.5 * std::erfc(-x / std::numbers::sqrt2);
  }
  return p;
}

ad::Var load_probability(ad::Var clean, ad::Var noisy, std::size_t k) {
  if (k + 1 > clean.cols()) return clean.tape().constant(Matrix(clean.rows(), clean.cols(), 1.0));
  ad::Var threshold = ad::kth_largest_excluding(noisy, k);
  return ad::normal_cdf(ad::div(ad::sub(clean, threshold), ad::softplus(clean)));
}

GatingResult gating_scores(Binder& bind, const GatingNetwork& gate, GraphInput& g, Level level,
                           const Matrix* z, bool with_load_prob) {
  if (gate.k < 1 || gate.k > gate.s)
    throw ConfigError("gating: need 1 <= k <= s, got k=" + std::to_string(gate.k) +
                      " s=" + std::to_string(gate.s));
  ad::Var x = g.x();
  ad::Var agg = x;
  if (gate.mode == GatingMode::structure)
    agg = ad::add(ad::mul(ad::add_scalar(bind(gate.alpha), 1.0), x), g.neighbor_sum(x));
  ad::Var hidden = ad::relu(linear_forward(bind, gate.fc1, agg));
  // fc2 is affine, so averaging node scores equals scoring the averaged hidden state
  ad::Var clean = level == Level::graph ? linear_forward(bind, gate.fc2, ad::mean_rows(hidden))
                                        : linear_forward(bind, gate.fc2, hidden);

  GatingResult r;
  r.clean = clean;
  r.noisy = clean;
  if (z != nullptr) {
    if (z->rows() != clean.rows() || z->cols() != clean.cols())
      throw DimensionError("gating: noise " + z->shape_string() + " for scores " +
                           clean.value().shape_string());
    r.noisy = ad::add(clean, ad::mul(clean.tape().constant(*z), ad::softplus(clean)));
    r.out.z_draws = *z;
  }

  const Matrix& u = r.noisy.value();
  std::vector<std::uint8_t> mask(u.size(), 0);
  r.out.selected.reserve(u.rows());
  for (std::size_t row = 0; row < u.rows(); ++row) {
    auto sel = top_k_indices(u.row_span(row), gate.k);
    for (std::size_t i : sel) mask[row * u.cols() + i] = 1;
    r.out.selected.push_back(std::move(sel));
  }
  r.weights = ad::masked_softmax(r.noisy, mask);
  if (with_load_prob) {
    r.load_prob = load_probability(clean, r.noisy, gate.k);
    r.out.load_prob = r.load_prob.value();
  }

  r.out.clean = clean.value();
  r.out.noisy = u;
  r.out.weights = r.weights.value();
  return r;
}

GatingResult gating_scores(Binder& bind, const GatingNetwork& gate, GraphInput& g, Level level,
                           std::mt19937_64& rng, bool training) {
  if (gate.noise_enabled && training) {
    const Matrix z = draw_noise(gating_rows(level, g.graph()), gate.s, rng);
    return gating_scores(bind, gate, g, level, &z);
  }
  return gating_scores(bind, gate, g, level, nullptr);
}

MixtureOutput mixture_forward(Binder& bind, const GatingNetwork& gate,
                              std::span<const ExpertGnn> experts, GraphInput& g, Level level,
                              const Matrix* z, bool with_load_prob) {
  if (experts.size() != gate.s)
    throw DimensionError("mixture: gate scores " + std::to_string(gate.s) + " experts, got " +
                         std::to_string(experts.size()));
  for (const ExpertGnn& e : experts)
    if (e.out_dim() != experts.front().out_dim())
      throw DimensionError("mixture: experts disagree on output width");

  MixtureOutput m;
  m.gating = gating_scores(bind, gate, g, level, z, with_load_prob);
  std::vector<bool> used(gate.s, false);
  for (const auto& sel : m.gating.out.selected)
    for (std::size_t i : sel) used[i] = true;

  for (std::size_t i = 0; i < gate.s; ++i) {
    if (!used[i]) continue;
    ad::Var e = level == Level::graph ? expert_forward_graph(bind, experts[i], g)
                                      : expert_forward_node(bind, experts[i], g);
    ad::Var term = ad::mul(ad::column(m.gating.weights, i), e);
    m.h = m.h.valid() ? ad::add(m.h, term) : term;
    m.executed.push_back(i);
  }
  return m;
}

DaMoeModel::DaMoeModel(const ModelSpec& spec) : spec_(spec) {
  if (spec.in_dim == 0 || spec.hidden == 0) throw ConfigError("model: dimensions must be positive");
  std::mt19937_64 rng(spec.seed);
  if (spec.fixed_depth > 0) {
    experts_.push_back(make_expert(params_, 0, spec.backbone, spec.fixed_depth, spec.in_dim,
                                   spec.hidden, spec.readout, rng));
  } else {
    if (spec.experts < 1) throw ConfigError("model: need at least one expert");
    if (spec.k < 1 || spec.k > spec.experts)
      throw ConfigError("model: need 1 <= k <= s, got k=" + std::to_string(spec.k) +
                        " s=" + std::to_string(spec.experts));
    for (std::size_t i = 0; i < spec.experts; ++i)
      experts_.push_back(make_expert(params_, i, spec.backbone, i + 1, spec.in_dim, spec.hidden,
                                     spec.readout, rng));
    gate_ = make_gating_network(params_, spec.in_dim, spec.gate_hidden, spec.experts, spec.k,
                                spec.noise, spec.gating, rng);
  }
  if (spec.out_dim > 0) head_ = make_linear(params_, "head", spec.hidden, spec.out_dim, rng);
}

GatingResult DaMoeModel::gate_forward(Binder& bind, GraphInput& g, const Matrix* z) const {
  return gating_scores(bind, gate_, g, spec_.level, z);
}

DaMoeModel::Forward DaMoeModel::forward(Binder& bind, GraphInput& g, const Matrix* z) const {
  Forward f;
  ad::Var h;
  if (is_mixture()) {
    // P only feeds the load loss, so inference skips it
    const bool training = g.x().tape().recording();
    MixtureOutput m = mixture_forward(bind, gate_, experts_, g, spec_.level, z, training);
    h = m.h;
    f.q_total = spec_.level == Level::graph ? m.gating.weights : ad::sum_rows(m.gating.weights);
    if (training)
      f.p_total = spec_.level == Level::graph ? m.gating.load_prob : ad::sum_rows(m.gating.load_prob);
    f.executed = std::move(m.executed);
    f.gating = std::move(m.gating);
  } else {
    h = spec_.level == Level::graph ? expert_forward_graph(bind, experts_[0], g)
                                    : expert_forward_node(bind, experts_[0], g);
    f.executed = {0};
  }
  f.out = head_ ? linear_forward(bind, *head_, h) : h;
  return f;
}

}  // namespace damoe
