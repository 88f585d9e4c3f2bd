// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
// the exit status is non-zero when any selected criterion fails.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "delayprop/batch.hpp"
#include "delayprop/bench_delays.hpp"
#include "delayprop/datasets.hpp"
#include "delayprop/gradcheck.hpp"
#include "delayprop/optimizer.hpp"
#include "delayprop/trainer.hpp"
#include "reference_eventprop.hpp"

using namespace delayprop;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

fs::path preset(const char* name) { return fs::path(DELAYPROP_PRESET_DIR) / name; }

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("delayprop_acceptance_" + name);
  fs::remove_all(dir);
  return dir;
}

std::vector<const TrialInput*> pointers(const std::vector<TrialInput>& trials) {
  std::vector<const TrialInput*> p;
  for (const auto& t : trials) p.push_back(&t);
  return p;
}

double max_rel_diff(const GradientStore& a, const GradientStore& b) {
  double worst = 0.0;
  for (std::size_t g = 0; g < a.dw.size(); ++g)
    for (std::size_t k = 0; k < a.dw[g].size(); ++k) {
      worst = std::max(worst, std::abs(a.dw[g][k] - b.dw[g][k]) / std::max(1.0, std::abs(b.dw[g][k])));
      worst = std::max(worst, std::abs(a.dd[g][k] - b.dd[g][k]) / std::max(1.0, std::abs(b.dd[g][k])));
    }
  return worst;
}

// ---------------------------------------------------------------------------

Outcome sequence_task() {
  const auto t0 = Clock::now();
  const RunConfig cfg = load_run_config(preset("sequence.json"));
  Network net = build_network(cfg.network);
  const auto& g = net.groups[0];
  const bool start_ok = g.delays(0, 0) == 0.0 && g.delays(1, 1) == 0.0 && g.delays(0, 1) == 10.0 &&
                        g.delays(1, 0) == 10.0 && std::all_of(g.weights.flat().begin(), g.weights.flat().end(),
                                                              [](double w) { return w == 1.0; });
  const SpikeDataset data = load_data(cfg).train;
  const LossSpec loss = resolve_loss(cfg, net);
  Optimizer opt(cfg.optimizer, net);
  std::size_t reached = 0;
  std::size_t batch = 0;
  for (std::size_t p = 0; p < 8 && !reached; ++p) {
    for (const auto& t : data.trials) {
      const TrialInput* one = &t;
      BatchResult r = run_batch_serial(make_plan(net, cfg.timing), {&one, 1}, loss, true);
      opt.step(net, r.grads, p, batch++);
    }
    const auto eval = run_batch_serial(make_plan(net, cfg.timing), pointers(data.trials), loss, false);
    if (eval.correct == eval.count) reached = p + 1;
  }
  const double secs = since(t0);
  const auto& d = net.groups[0].delays;
  return {start_ok && reached > 0 && cfg.optimizer.delay_lr == 1.0 && secs < 1.0,
          fmt("100%% after %zu presentation(s) (limit 8), %.3f s (limit 1 s), delays [%.2f %.2f; %.2f %.2f]", reached,
              secs, d(0, 0), d(0, 1), d(1, 0), d(1, 1))};
}

Outcome gradcheck_suite() {
  const auto t0 = Clock::now();
  const LossKind losses[] = {LossKind::kMaxVoltageCe, LossKind::kAvgVoltageCe, LossKind::kDeltaMse};
  std::size_t passed = 0;
  std::size_t coords = 0;
  std::size_t excluded = 0;
  std::ostringstream fails;
  for (std::uint64_t k = 0; k < 20; ++k) {
    RandomNetConfig rc;
    const int arch = static_cast<int>(k % 3);  // feedforward, recurrent, two hidden layers
    rc.recurrent = arch == 1;
    rc.hidden = arch == 2 ? std::vector<std::size_t>{4, 3} : std::vector<std::size_t>{4};
    rc.recurrent_sd = 0.5;
    rc.weight_mean = 1.5;
    rc.weight_sd = 0.8;
    const bool zero_delays = (k / 3) % 2 == 0;
    rc.delay_hi = zero_delays ? 0.0 : 5.0;
    LossSpec loss;
    loss.kind = losses[(k / 2) % 3];
    if (loss.kind == LossKind::kDeltaMse) {
      rc.output_kind = LayerKind::kOutputLif;
      loss.delta_t = 2.0;
    }
    const Network net = random_network(rc, 1000 + k);
    const auto trials = random_trials(rc.inputs, rc.outputs, 2, 8, 20.0, 2000 + k);
    const auto rep = check_all(net, trials, loss, {}, TimingMode::kExact);
    coords += rep.valid;
    excluded += rep.excluded;
    if (rep.pass && rep.valid > 0)
      ++passed;
    else
      fails << " net" << k << "(" << rep.verdict() << ")";
  }
  const double secs = since(t0);
  return {passed == 20 && secs < 300.0,
          fmt("%zu/20 nets pass, %zu valid coordinates, %zu excluded, %.1f s (limit 300 s)", passed, coords, excluded,
              secs) +
              fails.str()};
}

Outcome no_delay_reduction() {
  double worst = 0.0;
  std::size_t spikes = 0;
  for (std::uint64_t k = 0; k < 5; ++k) {
    RandomNetConfig rc;
    rc.recurrent = k % 2 == 1;
    rc.hidden = k == 4 ? std::vector<std::size_t>{5, 4} : std::vector<std::size_t>{6};
    rc.weight_mean = 1.5;
    rc.weight_sd = 0.8;
    rc.delay_hi = 0.0;
    LossSpec loss;
    loss.kind = k == 2 ? LossKind::kDeltaMse : k == 3 ? LossKind::kAvgVoltageCe : LossKind::kMaxVoltageCe;
    if (loss.kind == LossKind::kDeltaMse) rc.output_kind = LayerKind::kOutputLif;
    const Network net = random_network(rc, 50 + k);
    const SimPlan plan = make_plan(net, TimingMode::kGrid);
    for (const auto& t : random_trials(rc.inputs, rc.outputs, 4, 12, 25.0, 60 + k)) {
      const auto trace = run_trial_forward(plan, t);
      spikes += trace.spikes.size();
      const auto r = compute_loss(plan, trace, t.label, loss);
      const auto engine = run_trial_backward(plan, trace, r.schedule).grads;
      worst = std::max(worst, max_rel_diff(engine, reference::no_delay_backward(plan, trace, r.schedule)));
    }
  }
  return {worst <= 1e-12, fmt("5 nets, %zu spikes, max |diff| %.3g (limit 1e-12)", spikes, worst)};
}

RunConfig yinyang_config(std::uint64_t seed, std::size_t hidden, bool delays, const std::string& tag) {
  RunConfig cfg = load_run_config(preset("yinyang.json"));
  cfg.network.dt = 0.1;
  cfg.data.yinyang.dt = 0.1;
  cfg.network.layers[1].size = hidden;
  for (auto& g : cfg.network.groups) g.trainable_delays = delays;
  cfg.network.seed = seed;
  cfg.data.seed = seed;
  cfg.seed = seed;
  cfg.out_dir = scratch(tag + "_" + std::to_string(seed));
  return cfg;
}

double yinyang_test_accuracy(const RunConfig& cfg) {
  const auto s = train(cfg);
  return s.test_accuracy.value_or(0.0);
}

Outcome yinyang_accuracy() {
  const auto t0 = Clock::now();
  std::vector<double> acc;
  std::size_t max_epochs = 0;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const RunConfig cfg = yinyang_config(seed, 30, true, "yy30");
    max_epochs = cfg.epochs;
    acc.push_back(yinyang_test_accuracy(cfg));
  }
  const double mean = std::accumulate(acc.begin(), acc.end(), 0.0) / acc.size();
  return {mean >= 0.94 && max_epochs <= 300,
          fmt("5-30-3 test accuracy %.4f %.4f %.4f, mean %.4f (limit 0.94), <= %zu epochs, %.0f s", acc[0], acc[1],
              acc[2], mean, max_epochs, since(t0))};
}

Outcome yinyang_delays_vs_width() {
  const auto t0 = Clock::now();
  double narrow = 0.0;
  double wide = 0.0;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    narrow += yinyang_test_accuracy(yinyang_config(seed, 15, true, "yy15d"));
    wide += yinyang_test_accuracy(yinyang_config(seed, 30, false, "yy30w"));
  }
  narrow /= 8.0;
  wide /= 8.0;
  return {narrow >= wide - 0.01,
          fmt("mean test accuracy over 8 seeds: 15 hidden + delays %.4f, 30 hidden weights only %.4f, gap %+.2f pp "
              "(limit -1 pp), %.0f s",
              narrow, wide, 100.0 * (narrow - wide), since(t0))};
}

Outcome bench_scaling() {
  BenchDelaysConfig cfg;
  const auto rows = bench_delays(cfg);
  bool ok = rows.size() == 5;
  // Linear fit of analytic bytes against D_max.
  const double n = static_cast<double>(rows.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (const auto& r : rows) {
    sx += r.d_max;
    sy += static_cast<double>(r.analytic_buffer_bytes);
    sxx += static_cast<double>(r.d_max) * r.d_max;
    sxy += static_cast<double>(r.d_max) * static_cast<double>(r.analytic_buffer_bytes);
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double icpt = (sy - slope * sx) / n;
  double worst_fit = 0.0;
  double lo_ratio = 1e9, hi_ratio = 0.0;
  double worst_alloc = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const double y = static_cast<double>(rows[k].analytic_buffer_bytes);
    worst_fit = std::max(worst_fit, std::abs(y - (icpt + slope * rows[k].d_max)) / y);
    worst_alloc = std::max(worst_alloc, std::abs(static_cast<double>(rows[k].allocated_buffer_bytes) - y) / y);
    if (k > 0) {
      const double ratio = y / static_cast<double>(rows[k - 1].analytic_buffer_bytes);
      lo_ratio = std::min(lo_ratio, ratio);
      hi_ratio = std::max(hi_ratio, ratio);
    }
    ok = ok && rows[k].per_synapse_bytes == rows[0].per_synapse_bytes && rows[k].synapses == rows[0].synapses;
  }
  const double time_ratio = rows.back().epoch_seconds / rows.front().epoch_seconds;
  ok = ok && worst_fit <= 0.05 && lo_ratio >= 1.9 && hi_ratio <= 2.1 && worst_alloc <= 0.05 && time_ratio <= 1.3;
  write_bench_csv(rows, std::cerr);
  return {ok, fmt("memory fit residual %.3f%% (limit 5%%), doubling ratio [%.3f, %.3f], allocated vs analytic %.2f%%, "
                  "%zu B/synapse at every D_max, epoch time 512/32 = %.3f (limit 1.3)",
                  100 * worst_fit, lo_ratio, hi_ratio, 100 * worst_alloc, rows[0].per_synapse_bytes, time_ratio)};
}

Outcome synthetic_smoke() {
  const auto t0 = Clock::now();
  RunConfig cfg = load_run_config(preset("synthetic.json"));
  cfg.out_dir = scratch("synthetic");
  const auto s = train(cfg);
  const Network& net = s.final_network;
  std::size_t hidden = 0;
  bool rec_delays = false, ff_delays = false;
  for (const auto& g : net.groups) {
    if (g.recurrent()) rec_delays = g.trainable_delays, hidden = net.layers[g.pre_layer].size;
    if (!g.recurrent() && g.pre_layer == net.input_layer()) ff_delays = g.trainable_delays;
  }
  const SpikeDataset data = load_data(cfg).train;
  const auto eval = evaluate(net, data, resolve_loss(cfg, net), cfg.timing, cfg.workers);
  const double secs = since(t0);
  return {eval.accuracy == 1.0 && data.trials.size() == 200 && s.epochs_run == 20 && hidden == 128 && rec_delays &&
              ff_delays && secs < 600.0,
          fmt("%zu trials, %zu epochs, %zu recurrent hidden, final train accuracy %.3f, %.1f s (limit 600 s)",
              data.trials.size(), s.epochs_run, hidden, eval.accuracy, secs)};
}

// Property suites ------------------------------------------------------------

struct Property {
  const char* name;
  std::function<bool(std::string&)> check;
};

bool shift_invariance(std::string& why) {
  RandomNetConfig rc;
  rc.output_kind = LayerKind::kOutputLif;
  rc.weight_mean = 2.5;
  rc.weight_sd = 0.3;
  rc.duration = 60.0;
  double worst = 0.0;
  std::size_t used = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Network net = random_network(rc, 31 + seed);
    const SimPlan plan = make_plan(net, TimingMode::kGrid);
    auto base = random_trials(rc.inputs, rc.outputs, 1, 10, 15.0, seed)[0];
    auto shifted = base;
    for (auto& e : shifted.events) e.time += 7.0;
    const auto ta = run_trial_forward(plan, base);
    const auto tb = run_trial_forward(plan, shifted);
    if (std::any_of(ta.outputs.begin(), ta.outputs.end(), [](const OutputRecord& o) { return o.first_spike_index == kNoSpike; }))
      continue;
    ++used;
    const auto ra = delta_mse(plan, ta, base.label, 0.5);
    const auto rb = delta_mse(plan, tb, base.label, 0.5);
    worst = std::max(worst, std::abs(ra.value - rb.value));
    worst = std::max(worst, max_rel_diff(run_trial_backward(plan, ta, ra.schedule).grads,
                                         run_trial_backward(plan, tb, rb.schedule).grads));
  }
  why = fmt("%zu nets, max diff %.2g", used, worst);
  return used >= 5 && worst <= 1e-10;
}

bool scale_linearity(std::string& why) {
  double worst = 0.0;
  for (auto mode : {TimingMode::kGrid, TimingMode::kExact})
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      RandomNetConfig rc;
      rc.recurrent = true;
      rc.weight_mean = 1.5;
      rc.output_kind = seed % 2 ? LayerKind::kOutputLif : LayerKind::kOutputLi;
      const Network net = random_network(rc, 70 + seed);
      const SimPlan plan = make_plan(net, mode);
      LossSpec loss;
      loss.kind = seed % 2 ? LossKind::kDeltaMse : LossKind::kMaxVoltageCe;
      for (const auto& t : random_trials(rc.inputs, rc.outputs, 2, 12, 20.0, seed)) {
        const auto trace = run_trial_forward(plan, t);
        const auto r = compute_loss(plan, trace, t.label, loss);
        auto scaled = r.schedule;
        scaled.scale(3.5);
        auto g = run_trial_backward(plan, trace, scaled).grads;
        g.scale(1.0 / 3.5);
        worst = std::max(worst, max_rel_diff(g, run_trial_backward(plan, trace, r.schedule).grads));
      }
    }
  why = fmt("max rel diff %.2g", worst);
  return worst <= 1e-12;
}

bool zero_weight_zero_delay_grad(std::string& why) {
  std::size_t checked = 0;
  for (auto mode : {TimingMode::kGrid, TimingMode::kExact})
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      RandomNetConfig rc;
      rc.recurrent = true;
      rc.weight_mean = 1.5;
      Network net = random_network(rc, 90 + seed);
      for (auto& g : net.groups)
        for (std::size_t k = 0; k < g.weights.size(); k += 3) g.weights[k] = 0.0;
      const SimPlan plan = make_plan(net, mode);
      for (const auto& t : random_trials(rc.inputs, rc.outputs, 2, 12, 20.0, seed)) {
        const auto trace = run_trial_forward(plan, t);
        const auto grads = run_trial_backward(plan, trace, compute_loss(plan, trace, t.label, {}).schedule).grads;
        for (std::size_t g = 0; g < net.groups.size(); ++g)
          for (std::size_t k = 0; k < net.groups[g].weights.size(); k += 3) {
            ++checked;
            if (grads.dd[g][k] != 0.0) {
              why = fmt("nonzero delay gradient %.3g", grads.dd[g][k]);
              return false;
            }
          }
      }
    }
  why = fmt("%zu zero-weight synapses", checked);
  return true;
}

bool silent_presynaptic(std::string& why) {
  std::size_t checked = 0;
  for (auto mode : {TimingMode::kGrid, TimingMode::kExact}) {
    RandomNetConfig rc;
    rc.weight_mean = 1.5;
    rc.recurrent = true;
    Network net = random_network(rc, 23);
    for (std::size_t pre = 0; pre < net.groups[0].weights.cols(); ++pre) net.groups[0].weights(0, pre) = 0.0;
    for (auto& g : net.groups)
      if (g.recurrent())
        for (std::size_t pre = 0; pre < g.weights.cols(); ++pre) g.weights(0, pre) = 0.0;
    const SimPlan plan = make_plan(net, mode);
    const TrialInput t{{{0, 1.0}, {1, 4.0}, {0, 9.0}, {1, 12.0}}, 1};  // channel 2 never fires
    const auto trace = run_trial_forward(plan, t);
    if (trace.spike_counts[0] != 0) {
      why = "hidden neuron 0 fired";
      return false;
    }
    const auto grads = run_trial_backward(plan, trace, compute_loss(plan, trace, t.label, {}).schedule).grads;
    for (std::size_t g = 0; g < net.groups.size(); ++g) {
      const auto& grp = net.groups[g];
      const std::size_t silent_col = grp.pre_layer == net.input_layer() ? 2 : 0;
      for (std::size_t post = 0; post < grp.weights.rows(); ++post) {
        ++checked;
        if (grads.dw[g](post, silent_col) != 0.0 || grads.dd[g](post, silent_col) != 0.0) {
          why = "nonzero gradient on a silent source";
          return false;
        }
      }
    }
  }
  why = fmt("%zu synapses from silent sources", checked);
  return true;
}

bool forward_semigroup(std::string& why) {
  double worst = 0.0;
  for (double tm : {20.0, 10.0, 3.0})
    for (double ts : {5.0, 10.0, 7.0}) {
      NeuronParams p;
      p.tau_m = tm;
      p.tau_s = ts;
      for (double u1 : {0.01, 0.7, 3.0})
        for (double u2 : {0.2, 1.0, 9.5}) {
          const NeuronState s0{0.3, -1.7};
          const auto a = step_state(s0, p, u1 + u2);
          const auto b = step_state(step_state(s0, p, u1), p, u2);
          worst = std::max({worst, std::abs(a.v - b.v), std::abs(a.i - b.i)});
        }
    }
  why = fmt("max diff %.2g", worst);
  return worst <= 1e-14;
}

bool serialization(std::string& why) {
  RandomNetConfig rc;
  rc.recurrent = true;
  rc.hidden = {5, 4};
  const Network a = random_network(rc, 3);
  const Network b = build_network(network_spec_from_json(network_to_json(a)));
  for (std::size_t g = 0; g < a.groups.size(); ++g)
    if (!(a.groups[g].weights == b.groups[g].weights) || !(a.groups[g].delays == b.groups[g].delays) ||
        a.groups[g].slots != b.groups[g].slots) {
      why = "network differs after round trip";
      return false;
    }
  SyntheticConfig sc;
  sc.n_trials = 30;
  const auto ds = gen_synthetic(sc, 4);
  const auto path = fs::temp_directory_path() / "delayprop_acceptance_events.dpev";
  save_events(ds, path);
  auto back = load_events(path);
  fs::remove(path);
  back.name = ds.name;
  if (!(back == ds)) {
    why = "event file differs after round trip";
    return false;
  }
  why = "network json and event file bit-exact";
  return true;
}

bool delayed_reads(std::string& why) {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    RandomNetConfig rc;
    rc.recurrent = seed % 2 == 1;
    rc.hidden = seed < 3 ? std::vector<std::size_t>{5} : std::vector<std::size_t>{4, 3};
    rc.weight_mean = 1.5;
    rc.weight_sd = 0.8;
    rc.delay_hi = 9.0;
    const Network net = random_network(rc, 100 + seed);
    const SimPlan plan = make_plan(net, TimingMode::kGrid);
    for (const auto& t : random_trials(rc.inputs, rc.outputs, 3, 12, 25.0, seed)) {
      const auto trace = run_trial_forward(plan, t);
      const auto r = compute_loss(plan, trace, t.label, {});
      worst = std::max(worst, max_rel_diff(run_trial_backward(plan, trace, r.schedule).grads,
                                           reference::arrival_backward(plan, trace, r.schedule)));
    }
  }
  why = fmt("max diff vs arrival-list reference %.2g", worst);
  return worst <= 1e-12;
}

Outcome properties() {
  const Property props[] = {{"delta-mse shift invariance", shift_invariance},
                            {"loss-scale linearity", scale_linearity},
                            {"zero weight => zero delay gradient", zero_weight_zero_delay_grad},
                            {"silent presynaptic => zero gradients", silent_presynaptic},
                            {"forward semigroup", forward_semigroup},
                            {"serialization round trip", serialization},
                            {"delayed-read correctness", delayed_reads}};
  bool all = true;
  std::string detail;
  for (const auto& p : props) {
    std::string why;
    const bool ok = p.check(why);
    all = all && ok;
    detail += std::string(detail.empty() ? "" : "; ") + p.name + (ok ? " ok" : " FAILED") + " (" + why + ")";
  }
  return {all, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> selected;
  app.add_option("-c,--criterion", selected, "criteria to run (default: all)")->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);
  if (selected.empty()) selected = {1, 2, 3, 4, 5, 6, 7, 8};

  const std::function<Outcome()> criteria[] = {sequence_task,     gradcheck_suite, no_delay_reduction,
                                               yinyang_accuracy,  yinyang_delays_vs_width, bench_scaling,
                                               synthetic_smoke,   properties};
  const char* names[] = {"sequence task",  "gradient check", "zero-delay reduction", "yin-yang accuracy",
                         "delays vs width", "delay scaling",  "synthetic smoke",      "properties"};
  int failures = 0;
  for (int c : selected) {
    Outcome o;
    try {
      o = criteria[c - 1]();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << " " << names[c - 1] << ": " << o.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
