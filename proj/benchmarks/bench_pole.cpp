// Microbenchmarks for the hot paths: simulator windows, batch assembly, and
// the transformer forward/backward passes.
//
// Run e.g.:  ./build/benchmarks/pole_bench --benchmark_filter=forward

#include <benchmark/benchmark.h>

#include "pole/dataset.hpp"
#include "pole/dtmodel.hpp"
#include "pole/machine.hpp"
#include "pole/policies.hpp"
#include "pole/rng.hpp"
#include "pole/simulator.hpp"
#include "pole/workload.hpp"

using namespace pole;

namespace {

RunOptions pinned_options() {
  RunOptions run;
  run.mode = SchedulingMode::Pinned;
  run.reference_throughput = 1.0;  // skip the calibration episode
  return run;
}

void BM_episode_step(benchmark::State& state) {
  MachineTopology topo = builtin_topology("sandy-bridge");
  IndexConfig index;
  WorkloadSpec wl = make_workload("ycsb-a");
  Schedule sched = os_interleave(topo, index);
  // One fresh session per 256 steps; the counter reports per-step cost.
  int64_t steps = 0;
  for (auto _ : state) {
    EpisodeSession session(topo, index, wl, 1, pinned_options());
    for (int t = 0; t < index.num_chunks; ++t) {
      benchmark::DoNotOptimize(session.step(sched.assignments[t]));
    }
    steps += index.num_chunks;
  }
  state.SetItemsProcessed(steps);
}
BENCHMARK(BM_episode_step)->Unit(benchmark::kMillisecond);

void BM_full_episode(benchmark::State& state) {
  MachineTopology topo = builtin_topology("grace-hopper");
  IndexConfig index;
  WorkloadSpec wl = make_workload("ycsb-c");
  Schedule sched = os_default(topo, index);
  for (auto _ : state) {
    benchmark::DoNotOptimize(run_episode(topo, index, wl, sched, 1, pinned_options(), "bench"));
  }
}
BENCHMARK(BM_full_episode)->Unit(benchmark::kMillisecond);

OfflineDataset bench_dataset() {
  MachineTopology topo = builtin_topology("tiny-2x2");
  IndexConfig index;
  index.num_chunks = 64;
  WorkloadSpec wl = make_workload("ycsb-a");
  OfflineDataset ds;
  for (uint64_t s = 0; s < 8; ++s) {
    Schedule sched = random_policy(topo, index, s, 0.5);
    ds.append_episode(run_episode(topo, index, wl, sched, s, pinned_options(), "bench"));
  }
  return ds;
}

void BM_sample_batch(benchmark::State& state) {
  OfflineDataset ds = bench_dataset();
  FeatureStats stats = ds.compute_stats();
  Rng rng(7);
  for (auto _ : state) {
    benchmark::DoNotOptimize(ds.sample_batch(64, 20, stats, rng));
  }
}
BENCHMARK(BM_sample_batch)->Unit(benchmark::kMillisecond);

struct ModelFixture {
  ModelConfig config;
  ModelParams params;
  Batch batch;

  explicit ModelFixture(int batch_size) {
    config.action_vocab_size = 4;
    config.seed = 3;
    params = init_params(config);
    OfflineDataset ds = bench_dataset();
    FeatureStats stats = ds.compute_stats();
    Rng rng(11);
    batch = pack_batch(ds.sample_batch(batch_size, config.context_length, stats, rng));
  }
};

void BM_forward(benchmark::State& state) {
  ModelFixture fx(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(forward(fx.params, fx.batch));
  }
}
BENCHMARK(BM_forward)->Arg(1)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_train_step(benchmark::State& state) {
  ModelFixture fx(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    ForwardCache cache;
    Mat logits = forward(fx.params, fx.batch, &cache);
    Mat dlogits;
    benchmark::DoNotOptimize(action_loss(logits, fx.batch, &dlogits));
    ModelParams grads = backward(fx.params, fx.batch, cache, dlogits);
    benchmark::DoNotOptimize(grads);
  }
}
BENCHMARK(BM_train_step)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
