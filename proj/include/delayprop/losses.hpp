#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "delayprop/forward.hpp"
#include "delayprop/injection.hpp"

namespace delayprop {

enum class LossKind { kDeltaMse, kMaxVoltageCe, kAvgVoltageCe };

const char* to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

struct RegularizerSpec {
  std::size_t layer = 0;  // index into Network::layers
  double k_reg = 0.0;
  double target = 0.0;    // spikes per neuron per trial
};

struct LossSpec {
  LossKind kind = LossKind::kMaxVoltageCe;
  double delta_t = 0.5;  // ms, delta_mse only
  std::vector<RegularizerSpec> regularizers;
};

struct LossResult {
  double value = 0.0;      // primary loss
  double reg_value = 0.0;  // summed regularizer penalties
  InjectionSchedule schedule;
  std::size_t silent_outputs = 0;  // delta_mse: outputs without a spike
  int prediction = 0;
};

// 1/2 sum_{i != c} (t_i - t_c - delta_t)^2 over first output spike times.
// A silent output counts as firing at T and receives no gradient.
LossResult delta_mse(const SimPlan& plan, const ForwardTrace& trace, int label, double delta_t);

// -log softmax_c of the per-output maximum over grid samples of V.
LossResult max_voltage_ce(const SimPlan& plan, const ForwardTrace& trace, int label);

// -log softmax_c of the per-output time average of V over [0, T].
LossResult avg_voltage_ce(const SimPlan& plan, const ForwardTrace& trace, int label);

// k_reg sum_n (count_n - target)^2 over one layer; adds 2 k_reg (count_n - target)
// to dl_p/dt at every spike of neuron n.
void add_spike_regularizer(const SimPlan& plan, const ForwardTrace& trace, const RegularizerSpec& reg,
                           LossResult& result);

LossResult compute_loss(const SimPlan& plan, const ForwardTrace& trace, int label, const LossSpec& spec);

// Class picked by the readout belonging to the loss: earliest first spike for
// delta_mse, largest V_max or mean V otherwise. Ties go to the lower index.
int predict(const SimPlan& plan, const ForwardTrace& trace, LossKind kind);

// Numerically stable softmax.
std::vector<double> softmax(const std::vector<double>& z);

}  // namespace delayprop
