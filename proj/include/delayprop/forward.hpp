#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "delayprop/dynamics.hpp"
#include "delayprop/network.hpp"
#include "delayprop/trial.hpp"

namespace delayprop {

// kGrid: threshold tested at grid points only, spikes stamped on the grid,
// delays applied as whole slots, input times rounded to the nearest step.
// kExact: crossings located exactly inside the step, delays applied as
// their continuous shadow values; the step loop still drives bookkeeping.
enum class TimingMode { kGrid, kExact };

const char* to_string(TimingMode mode);
TimingMode timing_mode_from_string(const std::string& name);

struct Synapse {
  std::uint32_t post = 0;   // state index of the target neuron
  std::uint32_t group = 0;  // connection group
  std::uint32_t index = 0;  // flat (post, pre) index inside the group
  double weight = 0.0;
  double delay = 0.0;
  std::int32_t slot = 0;
};

// Per-layer constants for stateful (non-input) layers.
struct LayerPlan {
  std::size_t layer = 0;   // index into Network::layers
  std::size_t offset = 0;  // first state index
  std::size_t size = 0;
  LayerKind kind = LayerKind::kHiddenLif;
  NeuronParams params;
  StepCoeffs step;     // full-step forward flow
  AdjointCoeffs adj;   // full-step backward flow
  double int_v = 0.0;  // full-step voltage integral = int_v V + int_i I
  double int_i = 0.0;

  bool spiking() const { return kind == LayerKind::kHiddenLif || kind == LayerKind::kOutputLif; }
};

// Read-only view of a Network flattened for simulation. Rebuilt whenever
// parameters change.
struct SimPlan {
  TimingMode mode = TimingMode::kGrid;
  double dt = 1.0;
  std::size_t n_steps = 0;
  std::int32_t max_slots = 0;  // largest D_max over all groups
  std::size_t n_inputs = 0;
  std::vector<LayerPlan> layers;
  std::vector<std::uint32_t> layer_of;  // state index -> layers[]
  std::size_t output = 0;               // index into layers
  std::vector<std::size_t> group_rows;
  std::vector<std::size_t> group_cols;

  std::vector<std::size_t> input_begin;
  std::vector<Synapse> input_syn;
  std::vector<std::size_t> neuron_begin;
  std::vector<Synapse> neuron_syn;

  std::size_t neuron_count() const { return layer_of.size(); }
  double t_end() const { return static_cast<double>(n_steps) * dt; }
  double time_of(std::size_t step) const { return static_cast<double>(step) * dt; }
  // Step whose half-open interval [s dt, (s+1) dt) contains t.
  std::size_t bucket_of(double t) const;

  const LayerPlan& layer_for(std::size_t n) const { return layers[layer_of[n]]; }
  const LayerPlan& output_layer() const { return layers[output]; }

  std::span<const Synapse> input_fanout(std::size_t channel) const {
    return {input_syn.data() + input_begin[channel], input_begin[channel + 1] - input_begin[channel]};
  }
  std::span<const Synapse> fanout(std::size_t n) const {
    return {neuron_syn.data() + neuron_begin[n], neuron_begin[n + 1] - neuron_begin[n]};
  }
};

SimPlan make_plan(const Network& net, TimingMode mode);

// Per-neuron ring of D_max + 1 accumulator slots holding summed weights of
// grid-aligned arrivals. Slot k of step s is (s mod slots), row-major by slot.
class DelayBuffer {
 public:
  DelayBuffer(std::size_t neurons, std::int32_t max_slots);

  std::size_t slots() const { return slots_; }
  std::size_t neurons() const { return neurons_; }
  std::size_t bytes() const { return data_.size() * sizeof(double); }

  void add(std::size_t step, std::size_t neuron, double w) { data_[row(step) + neuron] += w; }
  std::span<double> slot(std::size_t step) { return {data_.data() + row(step), neurons_}; }

 private:
  std::size_t row(std::size_t step) const { return (step % slots_) * neurons_; }

  std::size_t neurons_;
  std::size_t slots_;
  std::vector<double> data_;
};

inline constexpr std::uint32_t kNoSpike = std::numeric_limits<std::uint32_t>::max();

struct SpikeRecord {
  std::uint32_t neuron = 0;  // state index
  std::uint32_t step = 0;    // bucket containing time
  double time = 0.0;
  double vdot_minus = 0.0;   // (I - theta) / tau_m just before the reset
};

struct InputRecord {
  std::uint32_t channel = 0;
  std::uint32_t step = 0;
  double time = 0.0;  // effective emission time (grid rounded in kGrid)
};

struct OutputRecord {
  double v_max = 0.0;        // over grid points t_0 .. t_N
  std::uint32_t t_max = 0;   // earliest grid step attaining v_max
  double first_spike = std::numeric_limits<double>::quiet_NaN();
  std::uint32_t first_spike_index = kNoSpike;  // into ForwardTrace::spikes
  double v_integral = 0.0;   // exact integral of V over [0, T]
};

struct ForwardTrace {
  TimingMode mode = TimingMode::kGrid;
  std::size_t n_steps = 0;
  double dt = 1.0;
  std::vector<SpikeRecord> spikes;  // chronological
  std::vector<InputRecord> inputs;  // chronological
  std::vector<std::uint32_t> spike_counts;  // per state index
  std::vector<double> injected;             // summed arriving weight per state index
  std::vector<OutputRecord> outputs;
  std::size_t dropped_arrivals = 0;
  // Grid samples (n_steps + 1) x neurons, filled only on request.
  std::vector<NeuronState> states;
};

struct ForwardOptions {
  bool record_states = false;
};

ForwardTrace run_trial_forward(const SimPlan& plan, const TrialInput& trial,
                               const ForwardOptions& options = {});

// CSV dumps of a trace: "step,neuron,v,i" and "neuron,step,time".
void write_state_csv(const ForwardTrace& trace, const std::string& path);
void write_spike_csv(const ForwardTrace& trace, const std::string& path);

}  // namespace delayprop
