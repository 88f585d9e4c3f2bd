#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "delayprop/backward.hpp"
#include "delayprop/network.hpp"

namespace delayprop {

enum class OptimizerKind { kAdam, kSgd };
enum class ScheduleKind { kConstant, kDecay, kEaseIn };

OptimizerKind optimizer_kind_from_string(const std::string& name);
ScheduleKind schedule_kind_from_string(const std::string& name);
const char* to_string(OptimizerKind kind);
const char* to_string(ScheduleKind kind);

struct Schedule {
  ScheduleKind kind = ScheduleKind::kConstant;
  double decay = 0.998;   // per epoch
  double growth = 1.05;   // per batch
  double start = 0.001;   // ease-in starting fraction
};

// decay: base decay^epoch; ease-in: base min(1, start growth^batch).
double schedule_lr(double base, const Schedule& schedule, std::size_t epoch, std::size_t batch);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TensorState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t t = 0;
};

// Returns false (and leaves everything untouched) if any gradient entry is
// not finite.
bool adam_step(std::span<double> params, std::span<const double> grads, TensorState& state, double lr,
               const AdamConfig& cfg);
bool sgd_step(std::span<double> params, std::span<const double> grads, double lr);

// Clips shadow delays to [0, D_max dt] and recomputes slot counts.
void project_delays(ConnectionGroup& group, double dt);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  AdamConfig adam;
  double weight_lr = 1e-3;
  double delay_lr = 1e-1;
  Schedule weight_schedule;
  Schedule delay_schedule;
};

struct StepReport {
  double weight_lr = 0.0;
  double delay_lr = 0.0;
  std::size_t skipped = 0;  // tensors left untouched because of non-finite gradients
};

class Optimizer {
 public:
  Optimizer() = default;
  Optimizer(const OptimizerConfig& cfg, const Network& net);

  // One update with the given batch gradient; `batch` counts batches since
  // the start of training.
  StepReport step(Network& net, const GradientStore& grads, std::size_t epoch, std::size_t batch);

  const OptimizerConfig& config() const { return cfg_; }
  std::size_t skipped_total() const { return skipped_; }

  nlohmann::json to_json() const;
  void load_json(const nlohmann::json& j);

 private:
  OptimizerConfig cfg_;
  std::vector<TensorState> weights_;
  std::vector<TensorState> delays_;
  std::size_t skipped_ = 0;
};

}  // namespace delayprop
