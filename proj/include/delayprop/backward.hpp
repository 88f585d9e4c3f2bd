#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "delayprop/forward.hpp"
#include "delayprop/injection.hpp"

namespace delayprop {

// dL/dw and dL/dd per connection group, shaped like the group matrices.
struct GradientStore {
  std::vector<Matrix> dw;
  std::vector<Matrix> dd;

  static GradientStore zeros_like(const Network& net);
  static GradientStore zeros_like(const SimPlan& plan);

  void add(const GradientStore& other);
  void scale(double c);
  void clear();
  bool all_finite() const;
};

// Jump of the spiking neuron's lam_V at a spike, written with the threshold
// trick so only the pre-reset slope is needed:
//   lam_V- = lam_V+ + (theta lam_V+ + lp + delayed) / (tau_m vdot_minus)
// `delayed` is sum_m w_mn (lam_V+ - lam_I+)_m read at each arrival time.
// |vdot_minus| below guard_eps is clamped to guard_eps keeping its sign.
double spike_jump(double lam_v_plus, double vdot_minus, const NeuronParams& p, double lp,
                  double delayed, double guard_eps, bool* clamped = nullptr);

// Default guard: 1e-4 theta / tau_m.
inline double default_guard(const NeuronParams& p) { return 1e-4 * p.threshold / p.tau_m; }

// Recent backward trajectory of (lam_V, lam_I) per neuron: one anchor at the
// top of each of the last D_max + 2 steps plus, in exact timing, an anchor
// after every jump inside a step. Values between anchors follow from the
// free adjoint flow, so any time in the window can be read back exactly.
class AdjointHistory {
 public:
  AdjointHistory(const SimPlan& plan, std::vector<double> forcing);

  // Called once per step b, going down: records lam at t_{b+1} and clears
  // the intra-step anchors of the slot being reused.
  void begin_step(std::size_t b, const std::vector<AdjointState>& lam);
  void add_anchor(std::size_t b, std::uint32_t n, double t, AdjointState s);

  // Right-limit value lam(t+) of neuron n; legal for steps in
  // [current, current + window).
  AdjointState read(std::uint32_t n, double t) const;
  AdjointState read_step(std::uint32_t n, std::size_t step) const;  // grid point read

  std::size_t window() const { return ring_; }
  std::size_t bytes() const;

 private:
  struct Anchor {
    double time;
    AdjointState s;
    std::int32_t next;
  };

  AdjointState back_from(std::uint32_t n, AdjointState s, double u, bool full) const;
  void check_window(std::size_t b) const;

  const SimPlan& plan_;
  std::vector<double> forcing_;
  std::size_t ring_;
  std::size_t neurons_;
  std::size_t current_ = 0;
  bool intra_;
  std::vector<AdjointState> top_;     // ring_ x neurons
  std::vector<std::int32_t> head_;    // ring_ x neurons, exact timing only
  std::vector<std::vector<Anchor>> anchors_;
};

struct BackwardOptions {
  double guard_scale = 1e-4;  // eps = guard_scale * theta / tau_m
};

struct BackwardResult {
  GradientStore grads;
  std::size_t guard_activations = 0;
};

BackwardResult run_trial_backward(const SimPlan& plan, const ForwardTrace& trace,
                                  const InjectionSchedule& schedule, const BackwardOptions& options = {});

}  // namespace delayprop
