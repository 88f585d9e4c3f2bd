// Serial reference vs OpenMP batch kernel on the synthetic smoke-test network.
#include <benchmark/benchmark.h>

#include <vector>

#include "delayprop/batch.hpp"
#include "delayprop/trainer.hpp"

using namespace delayprop;

namespace {

struct Setup {
  Network net;
  SimPlan plan;
  LossSpec loss;
  SpikeDataset data;
  std::vector<const TrialInput*> batch;

  Setup() {
    const RunConfig cfg = load_run_config(DELAYPROP_PRESET_DIR "/synthetic.json");
    net = build_network(cfg.network);
    plan = make_plan(net, cfg.timing);
    loss = resolve_loss(cfg, net);
    data = gen_synthetic(cfg.data.synthetic, cfg.data.seed);
    for (std::size_t k = 0; k < 32; ++k) batch.push_back(&data.trials[k]);
  }
};

const Setup& setup() {
  static const Setup s;
  return s;
}

void BM_BatchSerial(benchmark::State& state) {
  const auto& s = setup();
  for (auto _ : state) benchmark::DoNotOptimize(run_batch_serial(s.plan, s.batch, s.loss, true).loss);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.batch.size()));
}

void BM_BatchParallel(benchmark::State& state) {
  const auto& s = setup();
  const int workers = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(run_batch_parallel(s.plan, s.batch, s.loss, true, workers).loss);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(s.batch.size()));
}

void BM_ForwardOnly(benchmark::State& state) {
  const auto& s = setup();
  for (auto _ : state) benchmark::DoNotOptimize(run_batch_serial(s.plan, s.batch, s.loss, false).loss);
}

}  // namespace

BENCHMARK(BM_BatchSerial)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_BatchParallel)->Arg(1)->Arg(2)->Arg(4)->Arg(8)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_ForwardOnly)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
