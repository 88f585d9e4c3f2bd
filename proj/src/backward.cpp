#include "delayprop/backward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace delayprop {

GradientStore GradientStore::zeros_like(const Network& net) {
  GradientStore g;
  for (const auto& group : net.groups) {
    g.dw.emplace_back(group.weights.rows(), group.weights.cols());
    g.dd.emplace_back(group.delays.rows(), group.delays.cols());
  }
  return g;
}

GradientStore GradientStore::zeros_like(const SimPlan& plan) {
  GradientStore g;
  for (std::size_t k = 0; k < plan.group_rows.size(); ++k) {
    g.dw.emplace_back(plan.group_rows[k], plan.group_cols[k]);
    g.dd.emplace_back(plan.group_rows[k], plan.group_cols[k]);
  }
  return g;
}

void GradientStore::add(const GradientStore& other) {
  for (std::size_t g = 0; g < dw.size(); ++g) {
    for (std::size_t k = 0; k < dw[g].size(); ++k) dw[g][k] += other.dw[g][k];
    for (std::size_t k = 0; k < dd[g].size(); ++k) dd[g][k] += other.dd[g][k];
  }
}

void GradientStore::scale(double c) {
  for (auto& m : dw)
    for (auto& v : m.flat()) v *= c;
  for (auto& m : dd)
    for (auto& v : m.flat()) v *= c;
}

void GradientStore::clear() {
  for (auto& m : dw) m.fill(0.0);
  for (auto& m : dd) m.fill(0.0);
}

bool GradientStore::all_finite() const {
  auto finite = [](const Matrix& m) {
    return std::all_of(m.flat().begin(), m.flat().end(), [](double v) { return std::isfinite(v); });
  };
  return std::all_of(dw.begin(), dw.end(), finite) && std::all_of(dd.begin(), dd.end(), finite);
}

double spike_jump(double lam_v_plus, double vdot_minus, const NeuronParams& p, double lp, double delayed,
                  double guard_eps, bool* clamped) {
  double slope = vdot_minus;
  const bool clamp = std::abs(slope) < guard_eps;
  if (clamp) slope = std::copysign(guard_eps, slope);
  if (clamped) *clamped = clamp;
  return lam_v_plus + (p.threshold * lam_v_plus + lp + delayed) / (p.tau_m * slope);
}

// ---------------------------------------------------------------------------

AdjointHistory::AdjointHistory(const SimPlan& plan, std::vector<double> forcing)
    : plan_(plan),
      forcing_(std::move(forcing)),
      ring_(static_cast<std::size_t>(plan.max_slots) + 2),
      neurons_(plan.neuron_count()),
      intra_(plan.mode == TimingMode::kExact),
      top_(ring_ * neurons_) {
  if (forcing_.empty()) forcing_.assign(neurons_, 0.0);
  if (intra_) {
    head_.assign(ring_ * neurons_, -1);
    anchors_.resize(ring_);
  }
}

std::size_t AdjointHistory::bytes() const {
  return top_.size() * sizeof(AdjointState) + head_.size() * sizeof(std::int32_t);
}

void AdjointHistory::begin_step(std::size_t b, const std::vector<AdjointState>& lam) {
  current_ = b;
  const std::size_t slot = b % ring_;
  std::copy(lam.begin(), lam.end(), top_.begin() + static_cast<std::ptrdiff_t>(slot * neurons_));
  if (intra_) {
    std::fill_n(head_.begin() + static_cast<std::ptrdiff_t>(slot * neurons_), neurons_, -1);
    anchors_[slot].clear();
  }
}

void AdjointHistory::add_anchor(std::size_t b, std::uint32_t n, double t, AdjointState s) {
  if (!intra_) return;
  const std::size_t slot = b % ring_;
  auto& list = anchors_[slot];
  auto& head = head_[slot * neurons_ + n];
  list.push_back(Anchor{t, s, head});
  head = static_cast<std::int32_t>(list.size() - 1);
}

void AdjointHistory::check_window(std::size_t b) const {
  if (b < current_ || b - current_ >= ring_ || b >= plan_.n_steps)
    throw std::logic_error("adjoint history read outside the retained window");
}

AdjointState AdjointHistory::back_from(std::uint32_t n, AdjointState s, double u, bool full) const {
  const auto& lp = plan_.layer_for(n);
  if (full) return apply(lp.adj, s, forcing_[n]);
  if (u <= 0.0) return s;
  return apply(adjoint_coeffs(lp.params, u), s, forcing_[n]);
}

AdjointState AdjointHistory::read_step(std::uint32_t n, std::size_t step) const {
  check_window(step);
  return back_from(n, top_[(step % ring_) * neurons_ + n], plan_.dt, true);
}

AdjointState AdjointHistory::read(std::uint32_t n, double t) const {
  const std::size_t b = plan_.bucket_of(t);
  check_window(b);
  const std::size_t slot = b % ring_;
  if (intra_) {
    const auto& list = anchors_[slot];
    for (std::int32_t k = head_[slot * neurons_ + n]; k >= 0; k = list[static_cast<std::size_t>(k)].next) {
      const Anchor& a = list[static_cast<std::size_t>(k)];
      if (a.time > t) return back_from(n, a.s, a.time - t, false);
    }
  }
  return back_from(n, top_[slot * neurons_ + n], plan_.time_of(b + 1) - t, false);
}

// ---------------------------------------------------------------------------

namespace {

struct BackEvent {
  double time;
  std::uint32_t bucket;
  std::uint32_t kind;  // 0 kick, 1 spike, 2 input emission
  std::uint32_t index;
};

}  // namespace

BackwardResult run_trial_backward(const SimPlan& plan, const ForwardTrace& trace,
                                  const InjectionSchedule& schedule, const BackwardOptions& options) {
  const std::size_t n_neurons = plan.neuron_count();
  const std::size_t n_steps = plan.n_steps;
  const bool grid = plan.mode == TimingMode::kGrid;
  if (trace.mode != plan.mode || trace.n_steps != n_steps || trace.spike_counts.size() != n_neurons)
    throw std::invalid_argument("trace does not belong to this plan");
  if (!schedule.spike_lp.empty() && schedule.spike_lp.size() != trace.spikes.size())
    throw std::invalid_argument("spike_lp size does not match trace");

  BackwardResult result;
  result.grads = GradientStore::zeros_like(plan);
  std::vector<double> forcing = schedule.forcing;
  if (forcing.empty()) forcing.assign(n_neurons, 0.0);
  AdjointHistory history(plan, forcing);

  std::vector<BackEvent> events;
  events.reserve(schedule.kicks.size() + trace.spikes.size() + trace.inputs.size());
  for (std::size_t k = 0; k < schedule.kicks.size(); ++k) {
    const auto& kick = schedule.kicks[k];
    events.push_back(BackEvent{plan.time_of(kick.step), kick.step, 0, static_cast<std::uint32_t>(k)});
  }
  for (std::size_t k = 0; k < trace.spikes.size(); ++k)
    events.push_back(BackEvent{trace.spikes[k].time, trace.spikes[k].step, 1, static_cast<std::uint32_t>(k)});
  for (std::size_t k = 0; k < trace.inputs.size(); ++k)
    events.push_back(BackEvent{trace.inputs[k].time, trace.inputs[k].step, 2, static_cast<std::uint32_t>(k)});
  // Descending time; at equal times kicks first, then later-recorded events.
  std::sort(events.begin(), events.end(), [](const BackEvent& a, const BackEvent& b) {
    if (a.time != b.time) return a.time > b.time;
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.index > b.index;
  });

  std::vector<AdjointState> lam(n_neurons);
  std::vector<double> local(n_neurons, plan.t_end());
  std::vector<char> touched(n_neurons, 0);
  std::vector<std::uint32_t> touched_list;

  auto advance = [&](std::uint32_t n, double t) {
    const double u = local[n] - t;
    if (u > 0.0) {
      const auto& lp = plan.layer_for(n);
      lam[n] = grid ? apply(lp.adj, lam[n], forcing[n]) : apply(adjoint_coeffs(lp.params, u), lam[n], forcing[n]);
    }
    local[n] = t;
    if (!touched[n]) {
      touched[n] = 1;
      touched_list.push_back(n);
    }
  };

  // Gradient contributions of one emission; returns sum w (lam_V - lam_I).
  auto emit = [&](std::span<const Synapse> fan, double t, std::size_t step) {
    double delayed = 0.0;
    for (const auto& s : fan) {
      AdjointState a;
      if (grid) {
        const std::size_t at = step + static_cast<std::size_t>(s.slot);
        if (at >= n_steps) continue;
        a = history.read_step(s.post, at);
      } else {
        const double at = t + s.delay;
        if (!(at < plan.t_end())) continue;
        a = history.read(s.post, at);
      }
      const double tau_s = plan.layer_for(s.post).params.tau_s;
      result.grads.dw[s.group][s.index] += -tau_s * a.lam_i;
      result.grads.dd[s.group][s.index] += -s.weight * (a.lam_i - a.lam_v);
      delayed += s.weight * (a.lam_v - a.lam_i);
    }
    return delayed;
  };

  auto process = [&](const BackEvent& ev, std::size_t b) {
    if (ev.kind == 0) {
      const auto& kick = schedule.kicks[ev.index];
      advance(kick.neuron, ev.time);
      lam[kick.neuron].lam_v += kick.amount;
      history.add_anchor(b, kick.neuron, ev.time, lam[kick.neuron]);
    } else if (ev.kind == 1) {
      const auto& sp = trace.spikes[ev.index];
      const auto& p = plan.layer_for(sp.neuron).params;
      advance(sp.neuron, ev.time);
      const double delayed = emit(plan.fanout(sp.neuron), sp.time, sp.step);
      const double lp = schedule.spike_lp.empty() ? 0.0 : schedule.spike_lp[ev.index];
      bool clamped = false;
      lam[sp.neuron].lam_v = spike_jump(lam[sp.neuron].lam_v, sp.vdot_minus, p, lp, delayed,
                                        options.guard_scale * p.threshold / p.tau_m, &clamped);
      if (clamped) ++result.guard_activations;
      history.add_anchor(b, sp.neuron, ev.time, lam[sp.neuron]);
    } else {
      const auto& in = trace.inputs[ev.index];
      emit(plan.input_fanout(in.channel), in.time, in.step);
    }
  };

  std::size_t next = 0;
  // Events stamped at t = T (kicks at step N, grid spikes after the last step).
  for (; next < events.size() && events[next].bucket >= n_steps; ++next) process(events[next], n_steps);

  for (std::size_t b = n_steps; b-- > 0;) {
    history.begin_step(b, lam);
    for (auto n : touched_list) touched[n] = 0;
    touched_list.clear();
    for (; next < events.size() && events[next].bucket == b; ++next) process(events[next], b);

    const double t0 = plan.time_of(b);
    for (const auto& lp : plan.layers) {
      for (std::size_t n = lp.offset; n < lp.offset + lp.size; ++n) {
        if (touched[n]) {
          const double u = local[n] - t0;
          if (u > 0.0) lam[n] = apply(adjoint_coeffs(lp.params, u), lam[n], forcing[n]);
        } else {
          lam[n] = apply(lp.adj, lam[n], forcing[n]);
        }
        local[n] = t0;
      }
    }
    for (const auto& s : lam)
      if (!std::isfinite(s.lam_v) || !std::isfinite(s.lam_i))
        throw NumericError("non-finite adjoint state in backward pass", b);
  }
  if (next != events.size()) throw std::logic_error("backward pass left events unprocessed");
  return result;
}

}  // namespace delayprop
