// Times the serial reference, serial two-pass and OpenMP two-pass batch
// gradients, and serial vs parallel inference, on a synthetic batch.

#include <chrono>
#include <cstdio>
#include <functional>

#include <CLI11.hpp>

#include "damoe/graph.hpp"
#include "damoe/kernels.hpp"
#include "damoe/training.hpp"

using namespace damoe;

namespace {

double best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
    best = std::min(best, dt.count());
  }
  return best;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"damoe kernel benchmark"};
  std::size_t graphs = 400;
  int reps = 5;
  int threads = 0;
  std::string backbone = "gin";
  app.add_option("--graphs", graphs, "batch size")->check(CLI::PositiveNumber);
  app.add_option("--reps", reps, "repetitions, best time is reported")->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "OpenMP workers (0 = default)");
  app.add_option("--backbone", backbone, "gcn or gin");
  CLI11_PARSE(app, argc, argv);
  set_worker_threads(threads);

  TrainConfig cfg;
  cfg.backbone = parse_backbone(backbone);
  cfg.hidden = 32;
  const GraphDataset ds = generate_depth_sensitive_dataset(graphs, 1);
  const PreparedTask task = prepare_task(cfg, ds, ds);
  const DaMoeModel model(cfg.model_spec(task.in_dim, task.num_classes));
  const BatchSpec spec{cfg.task, cfg.lambda1, cfg.lambda2};
  const std::span<const Example> batch = task.train;

  const double ref = best_of(reps, [&] { batch_gradient_reference(model, batch, {}, spec); });
  const double serial = best_of(reps, [&] { batch_gradient(model, batch, {}, spec, false); });
  const double parallel = best_of(reps, [&] { batch_gradient(model, batch, {}, spec, true); });
  const double inf_serial = best_of(reps, [&] { infer_serial(model, batch); });
  const double inf_parallel = best_of(reps, [&] { infer(model, batch); });

  std::printf("graphs %zu, threads %d, backbone %s\n", batch.size(), worker_threads(), backbone.c_str());
  std::printf("%-28s %10s %9s\n", "kernel", "seconds", "speedup");
  std::printf("%-28s %10.4f %9s\n", "gradient, reference", ref, "-");
  std::printf("%-28s %10.4f %9.2f\n", "gradient, two-pass serial", serial, ref / serial);
  std::printf("%-28s %10.4f %9.2f\n", "gradient, two-pass openmp", parallel, ref / parallel);
  std::printf("%-28s %10.4f %9s\n", "inference, serial", inf_serial, "-");
  std::printf("%-28s %10.4f %9.2f\n", "inference, openmp", inf_parallel, inf_serial / inf_parallel);
  return 0;
}
