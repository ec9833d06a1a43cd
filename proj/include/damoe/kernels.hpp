#pragma once

// Batch-level kernels. Each has a serial form kept as the reference for
// tests and an OpenMP form that parallelizes over graphs.
//
// The balancing losses couple every graph in a batch through per-expert
// totals, so the parallel gradient runs in two passes: a cheap gate-only
// pass yields the totals and d(balancing)/d(totals); a second pass runs the
// full forward/backward per graph seeded with
//   task_sum / count + <q_total, dL/dQ> + <p_total, dL/dP>.
// Per-graph work is grouped into fixed-size chunks reduced in order, so the
// result does not depend on the thread count.

#include <cstddef>
#include <span>
#include <vector>

#include "damoe/damoe.hpp"
#include "damoe/graph.hpp"
#include "damoe/layers.hpp"
#include "damoe/losses.hpp"

namespace damoe {

// One unit of supervision: a graph, its cached constants, and its targets.
struct Example {
  const Graph* graph = nullptr;
  const GraphContext* context = nullptr;
  Targets targets;
};

struct ExampleOutput {
  Matrix out;
  std::optional<GatingOutput> gating;
  std::vector<std::size_t> executed;
};

struct BatchGradient {
  LossBreakdown loss;
  std::vector<Matrix> grads;  // indexed by parameter id
  std::vector<ExampleOutput> outputs;
};

struct BatchSpec {
  Task task = Task::graph_classification;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
};

// `noise` is empty (no noise) or holds one draw matrix per example.
// Single tape holding the whole batch; serial.
BatchGradient batch_gradient_reference(const DaMoeModel& model, std::span<const Example> batch,
                                       std::span<const Matrix> noise, const BatchSpec& spec);
// Two-pass per-graph form; `parallel` selects OpenMP.
BatchGradient batch_gradient(const DaMoeModel& model, std::span<const Example> batch,
                             std::span<const Matrix> noise, const BatchSpec& spec,
                             bool parallel = true);

// Noise-free forward passes without gradient recording.
std::vector<ExampleOutput> infer_serial(const DaMoeModel& model, std::span<const Example> batch);
std::vector<ExampleOutput> infer(const DaMoeModel& model, std::span<const Example> batch);

// Worker count for the parallel kernels: DAMOE_THREADS if set (capped by
// the OpenMP maximum), else the OpenMP maximum. 1 without OpenMP.
int worker_threads();
void set_worker_threads(int n);  // n <= 0 restores the default

}  // namespace damoe
