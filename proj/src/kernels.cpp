#include "damoe/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "damoe/errors.hpp"

namespace damoe {

namespace {

constexpr std::size_t kChunk = 8;
int g_threads_override = 0;

const Matrix* noise_for(std::span<const Matrix> noise, std::size_t i) {
  return noise.empty() ? nullptr : &noise[i];
}

void check_batch(const DaMoeModel& model, std::span<const Example> batch,
                 std::span<const Matrix> noise) {
  if (batch.empty()) throw ArgumentError("empty batch");
  if (!noise.empty() && noise.size() != batch.size())
    throw DimensionError("noise draws for " + std::to_string(noise.size()) + " of " +
                         std::to_string(batch.size()) + " examples");
  (void)model;
}

std::size_t total_count(std::span<const Example> batch, Task task) {
  std::size_t c = 0;
  for (const Example& e : batch) {
    switch (task) {
      case Task::graph_classification:
      case Task::node_classification: c += e.targets.labels.size(); break;
      case Task::graph_regression:
      case Task::link_prediction: c += e.targets.values.size(); break;
    }
  }
  if (c == 0) throw ArgumentError("batch has no supervised items");
  return c;
}

ExampleOutput capture(const DaMoeModel::Forward& f) {
  ExampleOutput o;
  o.out = f.out.value();
  if (f.gating) o.gating = f.gating->out;
  o.executed = f.executed;
  return o;
}

}  // namespace

int worker_threads() {
#ifdef _OPENMP
  const int max = omp_get_max_threads();
  if (g_threads_override > 0) return std::min(g_threads_override, max);
  if (const char* env = std::getenv("DAMOE_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return std::min(n, max);
  }
  return max;
#else
  return 1;
#endif
}

void set_worker_threads(int n) { g_threads_override = n > 0 ? n : 0; }

BatchGradient batch_gradient_reference(const DaMoeModel& model, std::span<const Example> batch,
                                       std::span<const Matrix> noise, const BatchSpec& spec) {
  check_batch(model, batch, noise);
  ad::Tape tape;
  Binder bind(tape, model.params());
  BatchGradient out;

  ad::Var task_sum;
  std::size_t count = 0;
  std::vector<ad::Var> q_rows, p_rows;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    GraphInput g(tape, *batch[i].graph, *batch[i].context);
    DaMoeModel::Forward f = model.forward(bind, g, noise_for(noise, i));
    TaskLossSum t = task_loss_sum(f.out, batch[i].targets, spec.task);
    task_sum = task_sum.valid() ? ad::add(task_sum, t.sum) : t.sum;
    count += t.count;
    if (model.is_mixture()) {
      q_rows.push_back(f.q_total);
      p_rows.push_back(f.p_total);
    }
    out.outputs.push_back(capture(f));
  }
  ad::Var task = ad::scale(task_sum, 1.0 / static_cast<double>(count));
  ad::Var l1 = model.is_mixture() ? importance_loss(q_rows) : tape.constant(Matrix::scalar(0.0));
  ad::Var l2 = model.is_mixture() ? load_loss(p_rows) : tape.constant(Matrix::scalar(0.0));
  TotalLoss total = total_loss(task, l1, l2, spec.lambda1, spec.lambda2);
  tape.backward(total.total);
  out.loss = total.breakdown;
  out.grads = model.params().zeros_like();
  bind.accumulate_grads(out.grads);
  return out;
}

BatchGradient batch_gradient(const DaMoeModel& model, std::span<const Example> batch,
                             std::span<const Matrix> noise, const BatchSpec& spec, bool parallel) {
  check_batch(model, batch, noise);
  const std::size_t n = batch.size();
  const std::size_t count = total_count(batch, spec.task);
  const int threads = parallel ? worker_threads() : 1;
  BatchGradient out;
  out.outputs.resize(n);

  // Pass 1: gate totals and the balancing-loss gradient with respect to them.
  const std::size_t s = model.is_mixture() ? model.gate().s : 0;
  Matrix grad_q(1, s), grad_p(1, s);
  double l1_value = 0.0, l2_value = 0.0;
  if (model.is_mixture()) {
    std::vector<Matrix> q_tot(n), p_tot(n);
#pragma omp parallel for num_threads(threads) schedule(dynamic)
    for (std::size_t i = 0; i < n; ++i) {
      ad::Tape tape(false);
      Binder bind(tape, model.params());
      GraphInput g(tape, *batch[i].graph, *batch[i].context);
      GatingResult r = model.gate_forward(bind, g, noise_for(noise, i));
      ad::Var q = r.weights.rows() == 1 ? r.weights : ad::sum_rows(r.weights);
      ad::Var p = r.load_prob.rows() == 1 ? r.load_prob : ad::sum_rows(r.load_prob);
      q_tot[i] = q.value();
      p_tot[i] = p.value();
    }
    Matrix sq(1, s), sp(1, s);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < s; ++j) {
        sq[j] += q_tot[i][j];
        sp[j] += p_tot[i][j];
      }
    ad::Tape tape;
    ad::Var vq = tape.leaf(sq, true), vp = tape.leaf(sp, true);
    ad::Var l1 = coefficient_of_variation_sq(vq), l2 = coefficient_of_variation_sq(vp);
    l1_value = l1.item();
    l2_value = l2.item();
    ad::Var bal = ad::add(ad::scale(l1, spec.lambda1), ad::scale(l2, spec.lambda2));
    tape.backward(bal);
    grad_q = vq.grad();
    grad_p = vp.grad();
  }

  // Pass 2: per-graph forward/backward, accumulated per chunk.
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<std::vector<Matrix>> chunk_grads(chunks);
  std::vector<double> task_sums(n, 0.0);
  const double inv_count = 1.0 / static_cast<double>(count);
#pragma omp parallel for num_threads(threads) schedule(dynamic)
  for (std::size_t c = 0; c < chunks; ++c) {
    chunk_grads[c] = model.params().zeros_like();
    for (std::size_t i = c * kChunk; i < std::min(n, (c + 1) * kChunk); ++i) {
      ad::Tape tape;
      Binder bind(tape, model.params());
      GraphInput g(tape, *batch[i].graph, *batch[i].context);
      DaMoeModel::Forward f = model.forward(bind, g, noise_for(noise, i));
      TaskLossSum t = task_loss_sum(f.out, batch[i].targets, spec.task);
      task_sums[i] = t.sum.item();
      ad::Var seed = ad::scale(t.sum, inv_count);
      if (model.is_mixture()) {
        seed = ad::add(seed, ad::sum(ad::mul(f.q_total, tape.constant(grad_q))));
        seed = ad::add(seed, ad::sum(ad::mul(f.p_total, tape.constant(grad_p))));
      }
      tape.backward(seed);
      bind.accumulate_grads(chunk_grads[c]);
      out.outputs[i] = capture(f);
    }
  }

  out.grads = model.params().zeros_like();
  for (const auto& cg : chunk_grads)
    for (std::size_t p = 0; p < cg.size(); ++p)
      for (std::size_t j = 0; j < cg[p].size(); ++j) out.grads[p][j] += cg[p][j];

  double task_total = 0.0;
  for (double v : task_sums) task_total += v;
  out.loss.task = task_total * inv_count;
  out.loss.importance = l1_value;
  out.loss.load = l2_value;
  out.loss.lambda1 = spec.lambda1;
  out.loss.lambda2 = spec.lambda2;
  out.loss.total = out.loss.task;
  if (spec.lambda1 != 0.0) out.loss.total += spec.lambda1 * l1_value;
  if (spec.lambda2 != 0.0) out.loss.total += spec.lambda2 * l2_value;
  return out;
}

namespace {

ExampleOutput infer_one(const DaMoeModel& model, const Example& e) {
  ad::Tape tape(false);
  Binder bind(tape, model.params());
  GraphInput g(tape, *e.graph, *e.context);
  return capture(model.forward(bind, g, nullptr));
}

}  // namespace

std::vector<ExampleOutput> infer_serial(const DaMoeModel& model, std::span<const Example> batch) {
  std::vector<ExampleOutput> out;
  out.reserve(batch.size());
  for (const Example& e : batch) out.push_back(infer_one(model, e));
  return out;
}

std::vector<ExampleOutput> infer(const DaMoeModel& model, std::span<const Example> batch) {
  std::vector<ExampleOutput> out(batch.size());
  const int threads = worker_threads();
#pragma omp parallel for num_threads(threads) schedule(dynamic)
  for (std::size_t i = 0; i < batch.size(); ++i) out[i] = infer_one(model, batch[i]);
  return out;
}

}  // namespace damoe
