#include "delayprop/forward.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <stdexcept>

namespace delayprop {

const char* to_string(TimingMode mode) { return mode == TimingMode::kGrid ? "grid" : "exact"; }

TimingMode timing_mode_from_string(const std::string& name) {
  if (name == "grid") return TimingMode::kGrid;
  if (name == "exact") return TimingMode::kExact;
  throw ConfigError("unknown timing mode '" + name + "'");
}

std::size_t SimPlan::bucket_of(double t) const {
  if (!(t > 0.0)) return 0;
  auto b = static_cast<std::size_t>(std::floor(t / dt));
  while (time_of(b + 1) <= t) ++b;
  while (b > 0 && time_of(b) > t) --b;
  return b;
}

SimPlan make_plan(const Network& net, TimingMode mode) {
  if (auto problems = validate(net); !problems.empty())
    throw ConfigError("network failed validation: " + problems.front());

  SimPlan plan;
  plan.mode = mode;
  plan.dt = net.dt;
  plan.n_steps = net.num_steps();
  const std::size_t in_layer = net.input_layer();
  const std::size_t out_layer = net.output_layer();
  plan.n_inputs = net.layers[in_layer].size;

  std::vector<std::size_t> offset(net.layers.size(), 0);
  std::size_t next = 0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    const auto& layer = net.layers[l];
    if (layer.kind == LayerKind::kInput) continue;
    LayerPlan lp;
    lp.layer = l;
    lp.offset = next;
    lp.size = layer.size;
    lp.kind = layer.kind;
    lp.params = layer.params;
    lp.step = forward_coeffs(lp.params, net.dt);
    lp.adj = adjoint_coeffs(lp.params, net.dt);
    lp.int_v = voltage_integral({1.0, 0.0}, lp.params, net.dt);
    lp.int_i = voltage_integral({0.0, 1.0}, lp.params, net.dt);
    if (l == out_layer) plan.output = plan.layers.size();
    offset[l] = next;
    for (std::size_t k = 0; k < layer.size; ++k)
      plan.layer_of.push_back(static_cast<std::uint32_t>(plan.layers.size()));
    plan.layers.push_back(lp);
    next += layer.size;
  }

  std::vector<std::vector<Synapse>> from_input(plan.n_inputs);
  std::vector<std::vector<Synapse>> from_neuron(next);
  for (std::size_t g = 0; g < net.groups.size(); ++g) {
    const auto& group = net.groups[g];
    plan.max_slots = std::max(plan.max_slots, group.max_delay_slots);
    const std::size_t rows = group.weights.rows();
    const std::size_t cols = group.weights.cols();
    plan.group_rows.push_back(rows);
    plan.group_cols.push_back(cols);
    const bool from_inputs = group.pre_layer == in_layer;
    for (std::size_t i = 0; i < cols; ++i) {
      auto& out = from_inputs ? from_input[i] : from_neuron[offset[group.pre_layer] + i];
      for (std::size_t j = 0; j < rows; ++j) {
        const std::size_t k = j * cols + i;
        out.push_back(Synapse{static_cast<std::uint32_t>(offset[group.post_layer] + j),
                              static_cast<std::uint32_t>(g), static_cast<std::uint32_t>(k),
                              group.weights[k], group.delays[k], group.slots[k]});
      }
    }
  }
  auto flatten = [](const std::vector<std::vector<Synapse>>& lists, std::vector<std::size_t>& begin,
                    std::vector<Synapse>& syn) {
    begin.assign(1, 0);
    for (const auto& l : lists) {
      syn.insert(syn.end(), l.begin(), l.end());
      begin.push_back(syn.size());
    }
  };
  flatten(from_input, plan.input_begin, plan.input_syn);
  flatten(from_neuron, plan.neuron_begin, plan.neuron_syn);
  return plan;
}

DelayBuffer::DelayBuffer(std::size_t neurons, std::int32_t max_slots)
    : neurons_(neurons),
      slots_(static_cast<std::size_t>(max_slots) + 1),
      data_(neurons_ * slots_, 0.0) {}

namespace {

void check_inputs(const SimPlan& plan, const TrialInput& trial) {
  double last = -std::numeric_limits<double>::infinity();
  for (const auto& ev : trial.events) {
    if (ev.channel >= plan.n_inputs)
      throw ConfigError("input event on channel " + std::to_string(ev.channel) + " but only " +
                        std::to_string(plan.n_inputs) + " input neurons");
    if (!(ev.time >= 0.0) || !(ev.time < plan.t_end()))
      throw ConfigError("input event time " + std::to_string(ev.time) + " outside [0, T)");
    if (ev.time < last) throw ConfigError("input events are not time-sorted");
    last = ev.time;
  }
}

class TraceBuilder {
 public:
  TraceBuilder(const SimPlan& plan, const ForwardOptions& options)
      : plan_(plan), options_(options), out_(plan.output_layer()) {
    trace_.mode = plan.mode;
    trace_.n_steps = plan.n_steps;
    trace_.dt = plan.dt;
    trace_.spike_counts.assign(plan.neuron_count(), 0);
    trace_.injected.assign(plan.neuron_count(), 0.0);
    trace_.outputs.assign(out_.size, OutputRecord{});
    if (options_.record_states) trace_.states.reserve((plan.n_steps + 1) * plan.neuron_count());
  }

  ForwardTrace& trace() { return trace_; }
  bool is_output(std::size_t n) const { return n >= out_.offset && n < out_.offset + out_.size; }

  void spike(std::size_t n, std::size_t step, double t, double vdot_minus) {
    const auto index = static_cast<std::uint32_t>(trace_.spikes.size());
    trace_.spikes.push_back(SpikeRecord{static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(step), t,
                                        vdot_minus});
    ++trace_.spike_counts[n];
    if (is_output(n)) {
      auto& rec = trace_.outputs[n - out_.offset];
      if (rec.first_spike_index == kNoSpike) {
        rec.first_spike_index = index;
        rec.first_spike = t;
      }
    }
  }

  void sample(std::size_t step, const std::vector<NeuronState>& x) {
    for (std::size_t k = 0; k < out_.size; ++k) {
      auto& rec = trace_.outputs[k];
      const double v = x[out_.offset + k].v;
      if (v > rec.v_max) {
        rec.v_max = v;
        rec.t_max = static_cast<std::uint32_t>(step);
      }
    }
    if (options_.record_states) trace_.states.insert(trace_.states.end(), x.begin(), x.end());
  }

  void check_finite(std::size_t step, const std::vector<NeuronState>& x) const {
    for (const auto& s : x)
      if (!std::isfinite(s.v) || !std::isfinite(s.i))
        throw NumericError("non-finite neuron state in forward pass", step);
  }

 private:
  const SimPlan& plan_;
  const ForwardOptions& options_;
  const LayerPlan& out_;
  ForwardTrace trace_;
};

ForwardTrace forward_grid(const SimPlan& plan, const TrialInput& trial, const ForwardOptions& options) {
  const std::size_t n_neurons = plan.neuron_count();
  const std::size_t n_steps = plan.n_steps;
  TraceBuilder tb(plan, options);
  ForwardTrace& trace = tb.trace();
  DelayBuffer buffer(n_neurons, plan.max_slots);
  std::vector<NeuronState> x(n_neurons);

  // Rounded input steps; stable sort keeps channel order for equal steps.
  std::vector<InputRecord> inputs;
  inputs.reserve(trial.events.size());
  for (const auto& ev : trial.events) {
    const auto step = static_cast<std::size_t>(std::nearbyint(ev.time / plan.dt));
    if (step >= n_steps) {
      ++trace.dropped_arrivals;
      continue;
    }
    inputs.push_back(InputRecord{ev.channel, static_cast<std::uint32_t>(step), plan.time_of(step)});
  }
  std::stable_sort(inputs.begin(), inputs.end(),
                   [](const InputRecord& a, const InputRecord& b) { return a.step < b.step; });

  auto deliver = [&](std::span<const Synapse> syn, std::size_t from_step) {
    for (const auto& s : syn) {
      const std::size_t at = from_step + static_cast<std::size_t>(s.slot);
      if (at >= n_steps) {
        ++trace.dropped_arrivals;
        continue;
      }
      buffer.add(at, s.post, s.weight);
    }
  };

  tb.sample(0, x);
  std::size_t next_input = 0;
  for (std::size_t s = 0; s < n_steps; ++s) {
    for (; next_input < inputs.size() && inputs[next_input].step == s; ++next_input) {
      trace.inputs.push_back(inputs[next_input]);
      deliver(plan.input_fanout(inputs[next_input].channel), s);
    }

    auto slot = buffer.slot(s);
    for (std::size_t n = 0; n < n_neurons; ++n) {
      x[n].i += slot[n];
      trace.injected[n] += slot[n];
    }
    std::fill(slot.begin(), slot.end(), 0.0);

    for (const auto& lp : plan.layers) {
      const bool is_out = &lp == &plan.output_layer();
      for (std::size_t n = lp.offset; n < lp.offset + lp.size; ++n) {
        if (is_out) trace.outputs[n - lp.offset].v_integral += lp.int_v * x[n].v + lp.int_i * x[n].i;
        x[n] = apply(lp.step, x[n]);
      }
    }

    const double t1 = plan.time_of(s + 1);
    for (const auto& lp : plan.layers) {
      if (!lp.spiking()) continue;
      const double theta = lp.params.threshold;
      for (std::size_t n = lp.offset; n < lp.offset + lp.size; ++n) {
        if (x[n].v < theta) continue;
        tb.spike(n, s + 1, t1, (x[n].i - theta) / lp.params.tau_m);
        x[n].v = 0.0;
        deliver(plan.fanout(n), s + 1);
      }
    }
    tb.check_finite(s + 1, x);
    tb.sample(s + 1, x);
  }
  return std::move(trace);
}

// ---------------------------------------------------------------------------

struct Event {
  double time;
  std::uint32_t kind;  // 0 crossing, 1 arrival
  std::uint32_t neuron;
  std::uint64_t seq;
  std::uint32_t version;
  double weight;
};

struct EventAfter {
  bool operator()(const Event& a, const Event& b) const {
    if (a.time != b.time) return a.time > b.time;
    if (a.kind != b.kind) return a.kind > b.kind;
    if (a.neuron != b.neuron) return a.neuron > b.neuron;
    return a.seq > b.seq;
  }
};

struct Pending {
  std::uint32_t post;
  double time;
  double weight;
};

ForwardTrace forward_exact(const SimPlan& plan, const TrialInput& trial, const ForwardOptions& options) {
  const std::size_t n_neurons = plan.neuron_count();
  const std::size_t n_steps = plan.n_steps;
  const double t_end = plan.t_end();
  TraceBuilder tb(plan, options);
  ForwardTrace& trace = tb.trace();
  const LayerPlan& out = plan.output_layer();

  const std::size_t ring = static_cast<std::size_t>(plan.max_slots) + 2;
  std::vector<std::vector<Pending>> pending(ring);
  std::priority_queue<Event, std::vector<Event>, EventAfter> heap;
  std::uint64_t seq = 0;

  std::vector<NeuronState> x(n_neurons);
  std::vector<double> local(n_neurons, 0.0);
  std::vector<std::uint32_t> version(n_neurons, 0);
  std::vector<char> touched(n_neurons, 0);
  std::vector<std::uint32_t> touched_list;

  auto advance = [&](std::size_t n, double t) {
    const double u = t - local[n];
    if (u > 0.0) {
      const auto& lp = plan.layer_for(n);
      if (tb.is_output(n)) trace.outputs[n - out.offset].v_integral += voltage_integral(x[n], lp.params, u);
      x[n] = step_state(x[n], lp.params, u);
    }
    local[n] = t;
    if (!touched[n]) {
      touched[n] = 1;
      touched_list.push_back(static_cast<std::uint32_t>(n));
    }
  };

  std::size_t current = 0;
  auto schedule = [&](std::span<const Synapse> syn, double t) {
    for (const auto& s : syn) {
      const double at = t + s.delay;
      if (!(at < t_end)) {
        ++trace.dropped_arrivals;
        continue;
      }
      if (s.weight == 0.0) continue;
      const std::size_t b = std::max(plan.bucket_of(at), current);
      if (b == current) {
        heap.push(Event{at, 1, s.post, seq++, 0, s.weight});
      } else {
        if (b - current >= ring) throw std::logic_error("arrival beyond delay ring");
        pending[b % ring].push_back(Pending{s.post, at, s.weight});
      }
    }
  };

  auto candidate = [&](std::size_t n, double t1) {
    const auto& lp = plan.layer_for(n);
    if (!lp.spiking()) return;
    if (auto u = find_crossing(x[n], lp.params, t1 - local[n]))
      heap.push(Event{local[n] + *u, 0, static_cast<std::uint32_t>(n), seq++, version[n], 0.0});
  };

  tb.sample(0, x);
  std::size_t next_input = 0;
  for (std::size_t s = 0; s < n_steps; ++s) {
    current = s;
    const double t1 = plan.time_of(s + 1);

    for (; next_input < trial.events.size() && plan.bucket_of(trial.events[next_input].time) == s;
         ++next_input) {
      const auto& ev = trial.events[next_input];
      trace.inputs.push_back(InputRecord{ev.channel, static_cast<std::uint32_t>(s), ev.time});
      schedule(plan.input_fanout(ev.channel), ev.time);
    }
    auto& due = pending[s % ring];
    for (const auto& p : due) heap.push(Event{p.time, 1, p.post, seq++, 0, p.weight});
    due.clear();

    // Cheap screen with the full-step flow; only plausible neurons get a
    // root search.
    for (const auto& lp : plan.layers) {
      if (!lp.spiking()) continue;
      const double theta = lp.params.threshold;
      for (std::size_t n = lp.offset; n < lp.offset + lp.size; ++n) {
        const NeuronState end = apply(lp.step, x[n]);
        if (end.v >= theta || (vdot(x[n], lp.params) > 0.0 && vdot(end, lp.params) < 0.0) ||
            x[n].v >= theta)
          candidate(n, t1);
      }
    }

    while (!heap.empty()) {
      const Event ev = heap.top();
      heap.pop();
      const std::size_t n = ev.neuron;
      if (ev.kind == 0) {
        if (ev.version != version[n]) continue;
        advance(n, ev.time);
        const auto& p = plan.layer_for(n).params;
        tb.spike(n, plan.bucket_of(ev.time), ev.time, (x[n].i - p.threshold) / p.tau_m);
        x[n].v = 0.0;
        ++version[n];
        schedule(plan.fanout(n), ev.time);
        candidate(n, t1);
      } else {
        advance(n, ev.time);
        x[n].i += ev.weight;
        trace.injected[n] += ev.weight;
        ++version[n];
        candidate(n, t1);
      }
    }

    for (const auto& lp : plan.layers) {
      const bool is_out = &lp == &out;
      for (std::size_t n = lp.offset; n < lp.offset + lp.size; ++n) {
        if (touched[n]) continue;
        if (is_out) trace.outputs[n - lp.offset].v_integral += lp.int_v * x[n].v + lp.int_i * x[n].i;
        x[n] = apply(lp.step, x[n]);
      }
    }
    for (auto n : touched_list) {
      const double u = t1 - local[n];
      if (u > 0.0) {
        const auto& lp = plan.layer_for(n);
        if (tb.is_output(n)) trace.outputs[n - out.offset].v_integral += voltage_integral(x[n], lp.params, u);
        x[n] = step_state(x[n], lp.params, u);
      }
      touched[n] = 0;
    }
    touched_list.clear();
    std::fill(local.begin(), local.end(), t1);

    tb.check_finite(s + 1, x);
    tb.sample(s + 1, x);
  }
  return std::move(trace);
}

}  // namespace

ForwardTrace run_trial_forward(const SimPlan& plan, const TrialInput& trial, const ForwardOptions& options) {
  check_inputs(plan, trial);
  return plan.mode == TimingMode::kGrid ? forward_grid(plan, trial, options)
                                        : forward_exact(plan, trial, options);
}

void write_state_csv(const ForwardTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "step,neuron,v,i\n";
  out.precision(17);
  const std::size_t n = trace.spike_counts.size();
  if (n == 0) return;
  for (std::size_t k = 0; k < trace.states.size(); ++k)
    out << k / n << ',' << k % n << ',' << trace.states[k].v << ',' << trace.states[k].i << '\n';
}

void write_spike_csv(const ForwardTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  out << "neuron,step,time\n";
  out.precision(17);
  for (const auto& s : trace.spikes) out << s.neuron << ',' << s.step << ',' << s.time << '\n';
}

}  // namespace delayprop
