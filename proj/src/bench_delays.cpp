#include "delayprop/bench_delays.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "delayprop/backward.hpp"
#include "delayprop/batch.hpp"
#include "delayprop/gradcheck.hpp"
#include "delayprop/optimizer.hpp"

namespace delayprop {

std::size_t peak_rss_kb() {
  std::ifstream in("/proc/self/status");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream fields(line.substr(6));
      std::size_t kb = 0;
      fields >> kb;
      return kb;
    }
  }
  return 0;
}

namespace {

double time_epoch(Network net, const std::vector<TrialInput>& trials, const BenchDelaysConfig& cfg) {
  OptimizerConfig oc;
  oc.weight_lr = 1e-3;
  oc.delay_lr = 1e-2;
  Optimizer opt(oc, net);
  LossSpec loss;
  loss.kind = LossKind::kMaxVoltageCe;
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t batch_index = 0;
  for (std::size_t at = 0; at < trials.size(); at += cfg.batch_size) {
    std::vector<const TrialInput*> batch;
    for (std::size_t k = at; k < std::min(trials.size(), at + cfg.batch_size); ++k) batch.push_back(&trials[k]);
    const SimPlan plan = make_plan(net, TimingMode::kGrid);
    BatchResult r = run_batch_parallel(plan, batch, loss, true, cfg.workers);
    r.grads.scale(1.0 / static_cast<double>(r.count));
    opt.step(net, r.grads, 0, batch_index++);
  }
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

std::vector<BenchDelaysRow> bench_delays(const BenchDelaysConfig& cfg) {
  RandomNetConfig rc;
  rc.inputs = cfg.inputs;
  rc.hidden = cfg.hidden;
  rc.outputs = cfg.outputs;
  rc.delay_lo = 0.0;
  rc.delay_hi = cfg.delay_hi;
  rc.weight_mean = 0.15;
  rc.weight_sd = 0.1;
  rc.dt = cfg.dt;
  rc.duration = cfg.duration;
  const Network base = random_network(rc, cfg.seed);
  const auto trials =
      random_trials(cfg.inputs, cfg.outputs, cfg.trials, cfg.events_per_trial, cfg.duration, cfg.seed + 1);

  std::vector<BenchDelaysRow> rows;
  for (const std::int32_t d_max : cfg.d_max) {
    Network net = base;
    for (auto& g : net.groups) {
      g.max_delay_slots = d_max;
      project_delays(g, net.dt);
    }
    const SimPlan plan = make_plan(net, TimingMode::kGrid);

    BenchDelaysRow row;
    row.d_max = d_max;
    row.neurons = plan.neuron_count();
    for (const auto& g : net.groups) row.synapses += g.weights.size();
    const std::size_t slots = static_cast<std::size_t>(d_max) + 1;
    row.analytic_buffer_bytes = row.neurons * slots * 3 * sizeof(double);
    row.allocated_buffer_bytes = DelayBuffer(row.neurons, d_max).bytes() + AdjointHistory(plan, {}).bytes();
    // weight, delay shadow and slot in the group matrices plus the plan's fan-out entry
    row.per_synapse_bytes = 2 * sizeof(double) + sizeof(std::int32_t) + sizeof(Synapse);

    time_epoch(net, trials, cfg);  // warm-up
    row.epoch_seconds = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < std::max<std::size_t>(cfg.repeats, 1); ++r)
      row.epoch_seconds = std::min(row.epoch_seconds, time_epoch(net, trials, cfg));
    row.peak_rss_kb = peak_rss_kb();
    rows.push_back(row);
  }
  return rows;
}

void write_bench_csv(const std::vector<BenchDelaysRow>& rows, std::ostream& out) {
  out << "d_max,neurons,synapses,analytic_buffer_bytes,allocated_buffer_bytes,per_synapse_bytes,peak_rss_kb,"
         "epoch_seconds\n";
  for (const auto& r : rows)
    out << r.d_max << ',' << r.neurons << ',' << r.synapses << ',' << r.analytic_buffer_bytes << ','
        << r.allocated_buffer_bytes << ',' << r.per_synapse_bytes << ',' << r.peak_rss_kb << ',' << r.epoch_seconds
        << '\n';
}

}  // namespace delayprop
