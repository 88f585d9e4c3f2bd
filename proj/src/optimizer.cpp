#include "delayprop/optimizer.hpp"

#include <algorithm>
#include <cmath>

namespace delayprop {

OptimizerKind optimizer_kind_from_string(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + name + "'");
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "constant") return ScheduleKind::kConstant;
  if (name == "decay") return ScheduleKind::kDecay;
  if (name == "ease-in") return ScheduleKind::kEaseIn;
  throw ConfigError("unknown lr schedule '" + name + "'");
}

const char* to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd"; }

const char* to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::kConstant: return "constant";
    case ScheduleKind::kDecay: return "decay";
    case ScheduleKind::kEaseIn: return "ease-in";
  }
  return "?";
}

double schedule_lr(double base, const Schedule& schedule, std::size_t epoch, std::size_t batch) {
  switch (schedule.kind) {
    case ScheduleKind::kConstant: return base;
    case ScheduleKind::kDecay: return base * std::pow(schedule.decay, static_cast<double>(epoch));
    case ScheduleKind::kEaseIn:
      return base * std::min(1.0, schedule.start * std::pow(schedule.growth, static_cast<double>(batch)));
  }
  return base;
}

namespace {

bool finite(std::span<const double> g) {
  return std::all_of(g.begin(), g.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

bool adam_step(std::span<double> params, std::span<const double> grads, TensorState& state, double lr,
               const AdamConfig& cfg) {
  if (!finite(grads)) return false;
  if (state.m.size() != params.size()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.t;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * grads[k];
    state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * grads[k] * grads[k];
    const double m_hat = state.m[k] / c1;
    const double v_hat = state.v[k] / c2;
    params[k] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
  return true;
}

bool sgd_step(std::span<double> params, std::span<const double> grads, double lr) {
  if (!finite(grads)) return false;
  for (std::size_t k = 0; k < params.size(); ++k) params[k] -= lr * grads[k];
  return true;
}

void project_delays(ConnectionGroup& group, double dt) {
  const double hi = group.max_delay(dt);
  for (auto& d : group.delays.flat()) d = std::clamp(d, 0.0, hi);
  refresh_slots(group, dt);
}

Optimizer::Optimizer(const OptimizerConfig& cfg, const Network& net) : cfg_(cfg) {
  weights_.resize(net.groups.size());
  delays_.resize(net.groups.size());
}

StepReport Optimizer::step(Network& net, const GradientStore& grads, std::size_t epoch, std::size_t batch) {
  StepReport r;
  r.weight_lr = schedule_lr(cfg_.weight_lr, cfg_.weight_schedule, epoch, batch);
  r.delay_lr = schedule_lr(cfg_.delay_lr, cfg_.delay_schedule, epoch, batch);
  auto update = [&](std::span<double> p, std::span<const double> g, TensorState& s, double lr) {
    const bool ok = cfg_.kind == OptimizerKind::kAdam ? adam_step(p, g, s, lr, cfg_.adam) : sgd_step(p, g, lr);
    if (!ok) ++r.skipped;
  };
  for (std::size_t k = 0; k < net.groups.size(); ++k) {
    auto& group = net.groups[k];
    if (group.trainable_weights) update(group.weights.flat(), grads.dw[k].flat(), weights_[k], r.weight_lr);
    if (group.trainable_delays) {
      update(group.delays.flat(), grads.dd[k].flat(), delays_[k], r.delay_lr);
      project_delays(group, net.dt);
    }
  }
  skipped_ += r.skipped;
  return r;
}

nlohmann::json Optimizer::to_json() const {
  auto tensors = [](const std::vector<TensorState>& states) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : states) arr.push_back({{"m", s.m}, {"v", s.v}, {"t", s.t}});
    return arr;
  };
  return {{"weights", tensors(weights_)}, {"delays", tensors(delays_)}, {"skipped", skipped_}};
}

void Optimizer::load_json(const nlohmann::json& j) {
  auto tensors = [](const nlohmann::json& arr, std::vector<TensorState>& states) {
    if (arr.size() != states.size()) throw ConfigError("optimizer state does not match network");
    for (std::size_t k = 0; k < states.size(); ++k) {
      states[k].m = arr[k].at("m").get<std::vector<double>>();
      states[k].v = arr[k].at("v").get<std::vector<double>>();
      states[k].t = arr[k].at("t").get<std::uint64_t>();
    }
  };
  tensors(j.at("weights"), weights_);
  tensors(j.at("delays"), delays_);
  skipped_ = j.at("skipped").get<std::size_t>();
}

}  // namespace delayprop
