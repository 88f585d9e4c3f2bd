#include "delayprop/batch.hpp"

#include <exception>
#include <optional>

#include <omp.h>

namespace delayprop {

TrialOutcome run_trial(const SimPlan& plan, const TrialInput& trial, const LossSpec& loss, GradientStore* grads) {
  const ForwardTrace trace = run_trial_forward(plan, trial);
  LossResult r = compute_loss(plan, trace, trial.label, loss);
  TrialOutcome out;
  out.loss = r.value;
  out.reg = r.reg_value;
  out.prediction = r.prediction;
  out.silent_outputs = r.silent_outputs;
  const auto& o = plan.output_layer();
  for (std::size_t n = 0; n < plan.neuron_count(); ++n)
    if (n < o.offset || n >= o.offset + o.size) out.hidden_spikes += trace.spike_counts[n];
  if (grads) {
    BackwardResult b = run_trial_backward(plan, trace, r.schedule);
    out.guard_activations = b.guard_activations;
    *grads = std::move(b.grads);
  }
  return out;
}

namespace {

void fold(BatchResult& into, const TrialOutcome& t, const TrialInput& trial) {
  into.loss += t.loss;
  into.reg += t.reg;
  ++into.count;
  if (t.prediction == trial.label) ++into.correct;
  into.hidden_spikes += t.hidden_spikes;
  into.guard_activations += t.guard_activations;
  if (t.silent_outputs > 0) ++into.silent_trials;
}

}  // namespace

BatchResult run_batch_serial(const SimPlan& plan, std::span<const TrialInput* const> trials, const LossSpec& loss,
                             bool with_grads) {
  BatchResult result;
  if (with_grads) result.grads = GradientStore::zeros_like(plan);
  GradientStore g;
  for (const TrialInput* trial : trials) {
    fold(result, run_trial(plan, *trial, loss, with_grads ? &g : nullptr), *trial);
    if (with_grads) result.grads.add(g);
  }
  return result;
}

BatchResult run_batch_parallel(const SimPlan& plan, std::span<const TrialInput* const> trials, const LossSpec& loss,
                               bool with_grads, int workers) {
  const std::size_t n = trials.size();
  std::vector<TrialOutcome> outcomes(n);
  std::vector<GradientStore> grads(with_grads ? n : 0);
  std::vector<std::exception_ptr> errors(n);

#pragma omp parallel for schedule(dynamic) num_threads(workers > 0 ? workers : omp_get_max_threads())
  for (std::size_t k = 0; k < n; ++k) {
    try {
      outcomes[k] = run_trial(plan, *trials[k], loss, with_grads ? &grads[k] : nullptr);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  BatchResult result;
  if (with_grads) result.grads = GradientStore::zeros_like(plan);
  for (std::size_t k = 0; k < n; ++k) {
    fold(result, outcomes[k], *trials[k]);
    if (with_grads) result.grads.add(grads[k]);
  }
  return result;
}

}  // namespace delayprop
