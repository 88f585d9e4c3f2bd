#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "delayprop/backward.hpp"
#include "delayprop/losses.hpp"

namespace delayprop {

struct TrialOutcome {
  double loss = 0.0;
  double reg = 0.0;
  int prediction = 0;
  std::size_t hidden_spikes = 0;
  std::size_t guard_activations = 0;
  std::size_t silent_outputs = 0;
};

// Sums over the trials of a batch. `grads` is the plain sum of per-trial
// gradients, added in trial order.
struct BatchResult {
  GradientStore grads;
  double loss = 0.0;
  double reg = 0.0;
  std::size_t count = 0;
  std::size_t correct = 0;
  std::size_t hidden_spikes = 0;
  std::size_t guard_activations = 0;
  std::size_t silent_trials = 0;
};

// Forward, loss and (optionally) backward for one trial.
TrialOutcome run_trial(const SimPlan& plan, const TrialInput& trial, const LossSpec& loss, GradientStore* grads);

// Reference implementation: trials one after another on the calling thread.
BatchResult run_batch_serial(const SimPlan& plan, std::span<const TrialInput* const> trials, const LossSpec& loss,
                             bool with_grads);

// Trials distributed over OpenMP threads; per-trial results are reduced in
// trial order afterwards, so the result is bit-identical to the serial path
// for any worker count.
BatchResult run_batch_parallel(const SimPlan& plan, std::span<const TrialInput* const> trials, const LossSpec& loss,
                               bool with_grads, int workers);

}  // namespace delayprop
