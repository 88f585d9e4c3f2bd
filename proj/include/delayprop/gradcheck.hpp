#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "delayprop/backward.hpp"
#include "delayprop/losses.hpp"

namespace delayprop {

struct Coordinate {
  std::size_t group = 0;
  std::size_t index = 0;  // flat (post, pre)
  bool delay = false;
};

// Discrete event structure of a forward pass: spike count per neuron and
// the grid step of every output's V_max.
struct Signature {
  std::vector<std::uint32_t> counts;
  std::vector<std::uint32_t> argmax;

  bool operator==(const Signature&) const = default;
};

struct FdEstimate {
  double value = 0.0;
  bool valid = true;  // discrete structure identical at every probed point
  bool one_sided = false;
};

struct GradCheckTolerances {
  double h_weight = 1e-4;
  double h_delay = 1e-3;  // ms
  double rel_weight = 1e-4;
  double rel_delay = 1e-3;
  double abs_rest = 1e-6;
  double pass_fraction = 0.95;
  bool richardson = true;
};

struct CoordinateReport {
  Coordinate coord;
  double exact = 0.0;
  double fd = 0.0;
  double rel_err = 0.0;
  double abs_err = 0.0;
  bool excluded = false;
  bool rel_ok = false;
};

struct GradCheckReport {
  std::vector<CoordinateReport> entries;
  std::size_t valid = 0;
  std::size_t rel_ok = 0;
  std::size_t excluded = 0;
  double worst_rest_abs = 0.0;  // largest abs error among valid coordinates failing rel
  bool pass = true;

  std::string verdict() const;
};

// Summed loss (primary + regularizer) over the trials.
double total_loss(const Network& net, const std::vector<TrialInput>& trials, const LossSpec& loss,
                  TimingMode mode, Signature* signature = nullptr);

// Summed exact gradient over the trials.
GradientStore exact_gradient(const Network& net, const std::vector<TrialInput>& trials, const LossSpec& loss,
                             TimingMode mode);

// Central difference (L(x + h) - L(x - h)) / 2h on one coordinate. Delay
// coordinates within h of the [0, D_max dt] bounds fall back to the
// second-order one-sided stencil.
FdEstimate fd_gradient(const Network& net, const std::vector<TrialInput>& trials, const LossSpec& loss,
                       const Coordinate& coord, double h, TimingMode mode);

// Richardson combination (4 D(h/2) - D(h)) / 3 of two fd_gradient calls,
// cancelling the h^2 term that dominates near quasi-tangential crossings.
FdEstimate fd_richardson(const Network& net, const std::vector<TrialInput>& trials, const LossSpec& loss,
                         const Coordinate& coord, double h, TimingMode mode);

std::vector<Coordinate> trainable_coordinates(const Network& net);

GradCheckReport check_all(const Network& net, const std::vector<TrialInput>& trials, const LossSpec& loss,
                          const GradCheckTolerances& tol = {}, TimingMode mode = TimingMode::kExact);

void write_report_csv(const GradCheckReport& report, const std::string& path);

// Small random networks and inputs for gradient checking.
struct RandomNetConfig {
  std::size_t inputs = 3;
  std::vector<std::size_t> hidden = {4};
  std::size_t outputs = 2;
  bool recurrent = false;
  LayerKind output_kind = LayerKind::kOutputLi;
  double delay_lo = 0.0;  // ms
  double delay_hi = 5.0;  // ms
  double weight_mean = 1.0;
  double weight_sd = 0.6;
  double recurrent_mean = 0.0;
  double recurrent_sd = 0.3;
  double dt = 1.0;
  double duration = 40.0;
  double tau_m = 20.0;
  double tau_s = 5.0;
  bool trainable_delays = true;
};

Network random_network(const RandomNetConfig& cfg, std::uint64_t seed);
std::vector<TrialInput> random_trials(std::size_t inputs, std::size_t classes, std::size_t count,
                                      std::size_t events_per_trial, double t_max, std::uint64_t seed);

}  // namespace delayprop
