#include "delayprop/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

namespace delayprop {

namespace {

double& parameter(Network& net, const Coordinate& c) {
  auto& g = net.groups[c.group];
  return c.delay ? g.delays[c.index] : g.weights[c.index];
}

Signature signature_of(const ForwardTrace& trace) {
  Signature s;
  s.counts = trace.spike_counts;
  for (const auto& rec : trace.outputs) s.argmax.push_back(rec.t_max);
  return s;
}

void append(Signature& into, const Signature& part) {
  into.counts.insert(into.counts.end(), part.counts.begin(), part.counts.end());
  into.argmax.insert(into.argmax.end(), part.argmax.begin(), part.argmax.end());
}

double loss_at(const Network& base, const std::vector<TrialInput>& trials, const LossSpec& loss,
               const Coordinate& c, double value, TimingMode mode, Signature* sig) {
  Network net = base;
  parameter(net, c) = value;
  if (c.delay) refresh_slots(net.groups[c.group], net.dt);
  return total_loss(net, trials, loss, mode, sig);
}

}  // namespace

std::string GradCheckReport::verdict() const {
  std::ostringstream out;
  out << (pass ? "PASS" : "FAIL") << ": " << rel_ok << "/" << valid << " valid coordinates within relative tolerance, "
      << excluded << " excluded, worst remaining abs err " << worst_rest_abs;
  return out.str();
}

double total_loss(const Network& net, const std::vector<TrialInput>& trials, const LossSpec& loss, TimingMode mode,
                  Signature* signature) {
  const SimPlan plan = make_plan(net, mode);
  double sum = 0.0;
  if (signature) *signature = {};
  for (const auto& trial : trials) {
    const ForwardTrace trace = run_trial_forward(plan, trial);
    const LossResult r = compute_loss(plan, trace, trial.label, loss);
    sum += r.value + r.reg_value;
    if (signature) append(*signature, signature_of(trace));
  }
  return sum;
}

GradientStore exact_gradient(const Network& net, const std::vector<TrialInput>& trials, const LossSpec& loss,
                             TimingMode mode) {
  const SimPlan plan = make_plan(net, mode);
  GradientStore total = GradientStore::zeros_like(plan);
  for (const auto& trial : trials) {
    const ForwardTrace trace = run_trial_forward(plan, trial);
    const LossResult r = compute_loss(plan, trace, trial.label, loss);
    total.add(run_trial_backward(plan, trace, r.schedule).grads);
  }
  return total;
}

FdEstimate fd_gradient(const Network& net, const std::vector<TrialInput>& trials, const LossSpec& loss,
                       const Coordinate& coord, double h, TimingMode mode) {
  FdEstimate est;
  const auto& group = net.groups[coord.group];
  const double x = coord.delay ? group.delays[coord.index] : group.weights[coord.index];
  Signature s0;
  total_loss(net, trials, loss, mode, &s0);

  double lo_bound = -std::numeric_limits<double>::infinity();
  double hi_bound = std::numeric_limits<double>::infinity();
  if (coord.delay) {
    lo_bound = 0.0;
    hi_bound = group.max_delay(net.dt);
  }

  Signature s1, s2;
  if (x - h >= lo_bound && x + h <= hi_bound) {
    const double up = loss_at(net, trials, loss, coord, x + h, mode, &s1);
    const double down = loss_at(net, trials, loss, coord, x - h, mode, &s2);
    est.value = (up - down) / (2.0 * h);
  } else {
    // f'(x) ~ (-3 f(x) + 4 f(x + s) - f(x + 2 s)) / 2 s with s = +-h, written in differences
    // so a flat loss gives exactly zero.
    const double step = x - h < lo_bound ? h : -h;
    const double f0 = total_loss(net, trials, loss, mode);
    const double f1 = loss_at(net, trials, loss, coord, x + step, mode, &s1);
    const double f2 = loss_at(net, trials, loss, coord, x + 2.0 * step, mode, &s2);
    est.value = (4.0 * (f1 - f0) - (f2 - f0)) / (2.0 * step);
    est.one_sided = true;
  }
  est.valid = s0 == s1 && s0 == s2;
  return est;
}

FdEstimate fd_richardson(const Network& net, const std::vector<TrialInput>& trials, const LossSpec& loss,
                         const Coordinate& coord, double h, TimingMode mode) {
  const FdEstimate coarse = fd_gradient(net, trials, loss, coord, h, mode);
  const FdEstimate fine = fd_gradient(net, trials, loss, coord, 0.5 * h, mode);
  FdEstimate est;
  est.value = (4.0 * fine.value - coarse.value) / 3.0;
  est.valid = coarse.valid && fine.valid;
  est.one_sided = coarse.one_sided || fine.one_sided;
  return est;
}

std::vector<Coordinate> trainable_coordinates(const Network& net) {
  std::vector<Coordinate> coords;
  for (std::size_t g = 0; g < net.groups.size(); ++g) {
    const auto& group = net.groups[g];
    if (group.trainable_weights)
      for (std::size_t k = 0; k < group.weights.size(); ++k) coords.push_back({g, k, false});
    if (group.trainable_delays)
      for (std::size_t k = 0; k < group.delays.size(); ++k) coords.push_back({g, k, true});
  }
  return coords;
}

GradCheckReport check_all(const Network& net, const std::vector<TrialInput>& trials, const LossSpec& loss,
                          const GradCheckTolerances& tol, TimingMode mode) {
  const GradientStore exact = exact_gradient(net, trials, loss, mode);
  const auto coords = trainable_coordinates(net);
  GradCheckReport report;
  report.entries.resize(coords.size());

#pragma omp parallel for schedule(dynamic)
  for (std::size_t k = 0; k < coords.size(); ++k) {
    const auto& c = coords[k];
    CoordinateReport& e = report.entries[k];
    e.coord = c;
    e.exact = c.delay ? exact.dd[c.group][c.index] : exact.dw[c.group][c.index];
    const double h = c.delay ? tol.h_delay : tol.h_weight;
    const FdEstimate fd = tol.richardson ? fd_richardson(net, trials, loss, c, h, mode)
                                         : fd_gradient(net, trials, loss, c, h, mode);
    e.fd = fd.value;
    e.excluded = !fd.valid;
    e.abs_err = std::abs(e.exact - e.fd);
    const double scale = std::max(std::abs(e.exact), std::abs(e.fd));
    e.rel_err = scale > 0.0 ? e.abs_err / scale : 0.0;
    e.rel_ok = e.rel_err < (c.delay ? tol.rel_delay : tol.rel_weight);
  }

  for (const auto& e : report.entries) {
    if (e.excluded) {
      ++report.excluded;
      continue;
    }
    ++report.valid;
    if (e.rel_ok) {
      ++report.rel_ok;
    } else {
      report.worst_rest_abs = std::max(report.worst_rest_abs, e.abs_err);
    }
  }
  report.pass = report.valid == 0 ||
                (static_cast<double>(report.rel_ok) >= tol.pass_fraction * static_cast<double>(report.valid) &&
                 report.worst_rest_abs < tol.abs_rest);
  return report;
}

void write_report_csv(const GradCheckReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out.precision(17);
  out << "group,index,param,exact,fd,rel_err,abs_err,excluded\n";
  for (const auto& e : report.entries)
    out << e.coord.group << ',' << e.coord.index << ',' << (e.coord.delay ? "delay" : "weight") << ',' << e.exact
        << ',' << e.fd << ',' << e.rel_err << ',' << e.abs_err << ',' << (e.excluded ? 1 : 0) << '\n';
}

// ---------------------------------------------------------------------------

Network random_network(const RandomNetConfig& cfg, std::uint64_t seed) {
  NetworkSpec spec;
  spec.dt = cfg.dt;
  spec.duration = cfg.duration;
  spec.seed = seed;
  NeuronParams p;
  p.tau_m = cfg.tau_m;
  p.tau_s = cfg.tau_s;
  spec.layers.push_back({"in", cfg.inputs, LayerKind::kInput, p});
  for (std::size_t h = 0; h < cfg.hidden.size(); ++h)
    spec.layers.push_back({"h" + std::to_string(h), cfg.hidden[h], LayerKind::kHiddenLif, p});
  spec.layers.push_back({"out", cfg.outputs, cfg.output_kind, p});

  auto group = [&](const std::string& pre, const std::string& post, double mean, double sd) {
    GroupSpec g;
    g.pre = pre;
    g.post = post;
    g.weights.kind = WeightInit::Kind::kNormal;
    g.weights.mean = mean;
    g.weights.sd = sd;
    g.delays.kind = cfg.delay_hi > cfg.delay_lo ? DelayInit::Kind::kUniform : DelayInit::Kind::kConstant;
    g.delays.lo = cfg.delay_lo;
    g.delays.hi = cfg.delay_hi;
    g.delays.value = cfg.delay_lo;
    g.trainable_delays = cfg.trainable_delays;
    g.max_delay_slots = static_cast<std::int32_t>(std::ceil(cfg.delay_hi / cfg.dt)) + 4;
    spec.groups.push_back(g);
  };
  std::string prev = "in";
  for (std::size_t h = 0; h < cfg.hidden.size(); ++h) {
    const std::string name = "h" + std::to_string(h);
    group(prev, name, cfg.weight_mean, cfg.weight_sd);
    if (cfg.recurrent) group(name, name, cfg.recurrent_mean, cfg.recurrent_sd);
    prev = name;
  }
  group(prev, "out", cfg.weight_mean, cfg.weight_sd);
  return build_network(spec);
}

std::vector<TrialInput> random_trials(std::size_t inputs, std::size_t classes, std::size_t count,
                                      std::size_t events_per_trial, double t_max, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint32_t> channel(0, static_cast<std::uint32_t>(inputs - 1));
  std::uniform_real_distribution<double> time(0.0, t_max);
  std::vector<TrialInput> trials(count);
  for (std::size_t k = 0; k < count; ++k) {
    trials[k].label = static_cast<std::int32_t>(k % classes);
    for (std::size_t e = 0; e < events_per_trial; ++e) trials[k].events.push_back({channel(rng), time(rng)});
    std::sort(trials[k].events.begin(), trials[k].events.end(),
              [](const InputEvent& a, const InputEvent& b) { return a.time < b.time; });
  }
  return trials;
}

}  // namespace delayprop
