#include "delayprop/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace delayprop {

const char* to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kDeltaMse: return "delta_mse";
    case LossKind::kMaxVoltageCe: return "max_voltage_ce";
    case LossKind::kAvgVoltageCe: return "avg_voltage_ce";
  }
  return "?";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "delta_mse") return LossKind::kDeltaMse;
  if (name == "max_voltage_ce") return LossKind::kMaxVoltageCe;
  if (name == "avg_voltage_ce") return LossKind::kAvgVoltageCe;
  throw ConfigError("unknown loss '" + name + "'");
}

std::vector<double> softmax(const std::vector<double>& z) {
  std::vector<double> p(z.size());
  if (z.empty()) return p;
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) sum += (p[k] = std::exp(z[k] - top));
  for (auto& v : p) v /= sum;
  return p;
}

namespace {

void check_label(const ForwardTrace& trace, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= trace.outputs.size())
    throw ConfigError("label " + std::to_string(label) + " out of range for " +
                      std::to_string(trace.outputs.size()) + " outputs");
}

int argmax_first(const std::vector<double>& z) {
  return static_cast<int>(std::max_element(z.begin(), z.end()) - z.begin());
}

double neg_log_softmax(const std::vector<double>& z, int c) {
  const double top = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - top);
  return -(z[static_cast<std::size_t>(c)] - top - std::log(sum));
}

std::vector<double> first_times(const SimPlan& plan, const ForwardTrace& trace) {
  std::vector<double> t;
  for (const auto& rec : trace.outputs) t.push_back(rec.first_spike_index == kNoSpike ? plan.t_end() : rec.first_spike);
  return t;
}

std::vector<double> mean_voltages(const SimPlan& plan, const ForwardTrace& trace) {
  std::vector<double> m;
  for (const auto& rec : trace.outputs) m.push_back(rec.v_integral / plan.t_end());
  return m;
}

std::vector<double> max_voltages(const ForwardTrace& trace) {
  std::vector<double> m;
  for (const auto& rec : trace.outputs) m.push_back(rec.v_max);
  return m;
}

}  // namespace

LossResult delta_mse(const SimPlan& plan, const ForwardTrace& trace, int label, double delta_t) {
  check_label(trace, label);
  LossResult r;
  r.schedule.spike_lp.assign(trace.spikes.size(), 0.0);
  const auto t = first_times(plan, trace);
  const auto c = static_cast<std::size_t>(label);
  double to_target = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (trace.outputs[i].first_spike_index == kNoSpike) ++r.silent_outputs;
    if (i == c) continue;
    const double e = t[i] - t[c] - delta_t;
    r.value += 0.5 * e * e;
    if (trace.outputs[i].first_spike_index != kNoSpike) r.schedule.spike_lp[trace.outputs[i].first_spike_index] += e;
    to_target -= e;
  }
  if (trace.outputs[c].first_spike_index != kNoSpike)
    r.schedule.spike_lp[trace.outputs[c].first_spike_index] += to_target;
  r.prediction = predict(plan, trace, LossKind::kDeltaMse);
  return r;
}

LossResult max_voltage_ce(const SimPlan& plan, const ForwardTrace& trace, int label) {
  check_label(trace, label);
  LossResult r;
  const auto z = max_voltages(trace);
  const auto p = softmax(z);
  r.value = neg_log_softmax(z, label);
  const auto& out = plan.output_layer();
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double g = p[i] - (static_cast<int>(i) == label ? 1.0 : 0.0);
    r.schedule.kicks.push_back(
        Kick{static_cast<std::uint32_t>(out.offset + i), trace.outputs[i].t_max, -g / out.params.tau_m});
  }
  r.prediction = argmax_first(z);
  return r;
}

LossResult avg_voltage_ce(const SimPlan& plan, const ForwardTrace& trace, int label) {
  check_label(trace, label);
  LossResult r;
  const auto z = mean_voltages(plan, trace);
  const auto p = softmax(z);
  r.value = neg_log_softmax(z, label);
  const auto& out = plan.output_layer();
  r.schedule.forcing.assign(plan.neuron_count(), 0.0);
  for (std::size_t i = 0; i < z.size(); ++i)
    r.schedule.forcing[out.offset + i] = (p[i] - (static_cast<int>(i) == label ? 1.0 : 0.0)) / plan.t_end();
  r.prediction = argmax_first(z);
  return r;
}

void add_spike_regularizer(const SimPlan& plan, const ForwardTrace& trace, const RegularizerSpec& reg,
                           LossResult& result) {
  if (reg.k_reg == 0.0) return;
  const LayerPlan* layer = nullptr;
  for (const auto& lp : plan.layers)
    if (lp.layer == reg.layer) layer = &lp;
  if (!layer || !layer->spiking()) throw ConfigError("regularizer must target a spiking layer");
  for (std::size_t n = layer->offset; n < layer->offset + layer->size; ++n) {
    const double e = static_cast<double>(trace.spike_counts[n]) - reg.target;
    result.reg_value += reg.k_reg * e * e;
  }
  if (result.schedule.spike_lp.empty()) result.schedule.spike_lp.assign(trace.spikes.size(), 0.0);
  for (std::size_t k = 0; k < trace.spikes.size(); ++k) {
    const auto n = trace.spikes[k].neuron;
    if (n < layer->offset || n >= layer->offset + layer->size) continue;
    result.schedule.spike_lp[k] += 2.0 * reg.k_reg * (static_cast<double>(trace.spike_counts[n]) - reg.target);
  }
}

LossResult compute_loss(const SimPlan& plan, const ForwardTrace& trace, int label, const LossSpec& spec) {
  LossResult r;
  switch (spec.kind) {
    case LossKind::kDeltaMse: r = delta_mse(plan, trace, label, spec.delta_t); break;
    case LossKind::kMaxVoltageCe: r = max_voltage_ce(plan, trace, label); break;
    case LossKind::kAvgVoltageCe: r = avg_voltage_ce(plan, trace, label); break;
  }
  for (const auto& reg : spec.regularizers) add_spike_regularizer(plan, trace, reg, r);
  return r;
}

int predict(const SimPlan& plan, const ForwardTrace& trace, LossKind kind) {
  switch (kind) {
    case LossKind::kDeltaMse: {
      const auto t = first_times(plan, trace);
      return static_cast<int>(std::min_element(t.begin(), t.end()) - t.begin());
    }
    case LossKind::kMaxVoltageCe: return argmax_first(max_voltages(trace));
    case LossKind::kAvgVoltageCe: return argmax_first(mean_voltages(plan, trace));
  }
  return 0;
}

}  // namespace delayprop
