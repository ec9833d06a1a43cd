#pragma once

// Small model and batch builders shared by the tests.

#include <deque>
#include <random>
#include <vector>

#include "damoe/damoe.hpp"
#include "damoe/kernels.hpp"
#include "oracles.hpp"

namespace fixture {

// Graphs, their contexts and examples with stable addresses.
struct Batch {
  std::deque<damoe::Graph> graphs;
  std::deque<damoe::GraphContext> contexts;
  std::vector<damoe::Example> examples;

  void add(damoe::Graph g) {
    graphs.push_back(std::move(g));
    contexts.push_back(damoe::make_context(graphs.back()));
    damoe::Example e;
    e.graph = &graphs.back();
    e.context = &contexts.back();
    e.targets.labels = {graphs.back().label};
    e.targets.values = {graphs.back().target};
    examples.push_back(e);
  }
};

inline Batch random_batch(std::size_t count, std::size_t d, std::mt19937_64& rng,
                          std::size_t min_n = 4, std::size_t max_n = 9) {
  Batch b;
  std::uniform_int_distribution<std::size_t> size(min_n, max_n);
  std::uniform_int_distribution<int> label(0, 1);
  std::normal_distribution<double> target(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    damoe::Graph g = oracle::random_graph(size(rng), 0.25, d, rng);
    g.id = i;
    g.label = label(rng);
    g.target = target(rng);
    b.add(std::move(g));
  }
  return b;
}

inline damoe::ModelSpec small_spec(damoe::Backbone bb, std::size_t in_dim, std::size_t k,
                                   std::uint64_t seed = 0) {
  damoe::ModelSpec s;
  s.backbone = bb;
  s.in_dim = in_dim;
  s.hidden = 4;
  s.out_dim = 2;
  s.experts = 4;
  s.k = k;
  s.gate_hidden = 5;
  s.readout = damoe::default_readout(bb);
  s.seed = seed;
  return s;
}

// Gate parameters are initialized symmetrically (zero biases, alpha 0).
// Randomize them so gradient checks exercise generic points.
inline void randomize_parameters(damoe::DaMoeModel& m, std::mt19937_64& rng, double scale = 0.5) {
  std::uniform_real_distribution<double> u(-scale, scale);
  for (damoe::Parameter& p : m.params().all())
    for (double& v : p.value.values()) v = u(rng);
}

inline std::vector<damoe::Matrix> noise_for(const damoe::DaMoeModel& m, const Batch& b,
                                            std::mt19937_64& rng) {
  std::vector<damoe::Matrix> z;
  for (const damoe::Example& e : b.examples)
    z.push_back(damoe::draw_noise(m.noise_rows(*e.graph), m.spec().experts, rng));
  return z;
}

}  // namespace fixture
