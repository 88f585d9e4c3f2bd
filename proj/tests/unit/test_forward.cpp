#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "delayprop/datasets.hpp"
#include "delayprop/dynamics.hpp"
#include "delayprop/forward.hpp"
#include "delayprop/gradcheck.hpp"
#include "test_util.hpp"

using namespace delayprop;
using delayprop::fixtures::trial;

TEST(Forward, OptimalSequenceDelaysSolveTask) {
  const Network net = build_network(fixtures::sequence_spec({10, 0, 0, 10}));
  const SimPlan plan = make_plan(net, TimingMode::kGrid);
  const SpikeDataset ds = gen_sequence_task();
  for (const auto& t : ds.trials) {
    const auto trace = run_trial_forward(plan, t);
    const int c = t.label;
    EXPECT_GT(trace.outputs[c].v_max, trace.outputs[1 - c].v_max) << "label " << c;
  }
}

TEST(Forward, WorstSequenceDelaysFailTask) {
  const Network net = build_network(fixtures::sequence_spec({0, 10, 10, 0}));
  const SimPlan plan = make_plan(net, TimingMode::kGrid);
  for (const auto& t : gen_sequence_task().trials) {
    const auto trace = run_trial_forward(plan, t);
    EXPECT_LT(trace.outputs[t.label].v_max, trace.outputs[1 - t.label].v_max);
  }
}

TEST(Forward, DelayShiftsPostsynapticCurrentByWholeSteps) {
  auto spec = fixtures::fan_spec(0.4, 0.0, LayerKind::kOutputLi, 60.0, 1.0, 3);
  const Network a = build_network(spec);
  spec.groups[0].delays.value = 7.0;
  const Network b = build_network(spec);
  ForwardOptions opt;
  opt.record_states = true;
  const auto in = trial({{0, 2.0}, {0, 11.0}, {0, 20.0}});
  const auto ta = run_trial_forward(make_plan(a, TimingMode::kGrid), in, opt);
  const auto tb = run_trial_forward(make_plan(b, TimingMode::kGrid), in, opt);
  const std::size_t n = 3;
  for (std::size_t s = 0; s + 7 <= 60; ++s)
    for (std::size_t k = 0; k < n; ++k) {
      EXPECT_EQ(ta.states[s * n + k].i, tb.states[(s + 7) * n + k].i);
      EXPECT_EQ(ta.states[s * n + k].v, tb.states[(s + 7) * n + k].v);
    }
}

TEST(Forward, DelayBufferSlotsAreIndependentAndRecycled) {
  DelayBuffer buf(3, 4);
  EXPECT_EQ(buf.slots(), 5u);
  buf.add(2, 1, 0.5);
  buf.add(6, 1, 0.25);  // step 6 shares no slot with step 2 within a window of 5
  buf.add(7, 1, 1.0);   // same ring slot as step 2
  EXPECT_EQ(buf.slot(2)[1], 1.5);
  EXPECT_EQ(buf.slot(6)[1], 0.25);
  EXPECT_EQ(buf.bytes(), 15 * sizeof(double));
}

TEST(Forward, InjectedWeightIsConserved) {
  RandomNetConfig rc;
  rc.recurrent = true;
  rc.hidden = {6};
  rc.delay_hi = 12.0;
  rc.weight_mean = 1.2;
  const Network net = random_network(rc, 5);
  const SimPlan plan = make_plan(net, TimingMode::kGrid);
  for (const auto& t : random_trials(rc.inputs, rc.outputs, 4, 10, 20.0, 9)) {
    const auto trace = run_trial_forward(plan, t);
    double expected = 0.0;
    std::size_t dropped = 0;
    auto count = [&](std::span<const Synapse> fan, std::size_t step) {
      for (const auto& s : fan) {
        if (step + static_cast<std::size_t>(s.slot) < plan.n_steps)
          expected += s.weight;
        else
          ++dropped;
      }
    };
    for (const auto& in : trace.inputs) count(plan.input_fanout(in.channel), in.step);
    for (const auto& sp : trace.spikes) count(plan.fanout(sp.neuron), sp.step);
    const double injected = std::accumulate(trace.injected.begin(), trace.injected.end(), 0.0);
    EXPECT_NEAR(injected, expected, 1e-12);
    EXPECT_EQ(trace.dropped_arrivals, dropped);
  }
}

TEST(Forward, ArrivalAfterTrialEndIsDropped) {
  const Network net = build_network(fixtures::fan_spec(1.0, 15.0, LayerKind::kOutputLi, 20.0, 1.0));
  const auto trace = run_trial_forward(make_plan(net, TimingMode::kGrid), trial({{0, 8.0}}));
  EXPECT_EQ(trace.dropped_arrivals, 1u);
  EXPECT_EQ(trace.outputs[0].v_max, 0.0);
}

TEST(Forward, BadInputsAreConfigErrors) {
  const Network net = build_network(fixtures::fan_spec(1.0, 0.0, LayerKind::kOutputLi));
  const SimPlan plan = make_plan(net, TimingMode::kGrid);
  EXPECT_THROW(run_trial_forward(plan, trial({{3, 1.0}})), ConfigError);
  EXPECT_THROW(run_trial_forward(plan, trial({{0, 40.0}})), ConfigError);
  EXPECT_THROW(run_trial_forward(plan, trial({{0, -1.0}})), ConfigError);
  EXPECT_THROW(run_trial_forward(plan, trial({{0, 5.0}, {0, 2.0}})), ConfigError);
}

TEST(Forward, LifResetsAndCachesSlope) {
  const Network net = build_network(fixtures::fan_spec(8.0, 0.0, LayerKind::kHiddenLif, 40.0, 0.5));
  ForwardOptions opt;
  opt.record_states = true;
  const SimPlan plan = make_plan(net, TimingMode::kGrid);
  const auto trace = run_trial_forward(plan, trial({{0, 1.0}}), opt);
  ASSERT_FALSE(trace.spikes.empty());
  const auto& sp = trace.spikes[0];
  const auto& at = trace.states[sp.step * plan.neuron_count()];
  EXPECT_EQ(at.v, 0.0);
  EXPECT_NEAR(sp.vdot_minus, (at.i - 1.0) / 20.0, 1e-15);
  EXPECT_DOUBLE_EQ(sp.time, sp.step * 0.5);
}

TEST(Forward, ExactSpikeSitsOnThreshold) {
  const Network net = build_network(fixtures::fan_spec(8.0, 1.3, LayerKind::kHiddenLif, 40.0, 0.5));
  const auto trace = run_trial_forward(make_plan(net, TimingMode::kExact), trial({{0, 1.07}}));
  ASSERT_FALSE(trace.spikes.empty());
  const double t = trace.spikes[0].time;
  // Arrival at 1.07 + 1.3, jump of 8 into I, then free flow until the crossing.
  const auto s = step_state({0.0, 8.0}, net.layers[1].params, t - 2.37);
  EXPECT_NEAR(s.v, 1.0, 1e-10);
  EXPECT_NEAR(trace.spikes[0].vdot_minus, (s.i - 1.0) / 20.0, 1e-10);
}

TEST(Forward, GridAndExactAgreeWithoutSpikes) {
  RandomNetConfig rc;
  rc.hidden = {};
  rc.inputs = 4;
  rc.outputs = 3;
  rc.delay_hi = 0.0;
  const Network net = random_network(rc, 11);
  std::vector<TrialInput> trials;
  trials.push_back(trial({{0, 1.0}, {2, 3.0}, {1, 3.0}, {3, 17.0}}));
  for (const auto& t : trials) {
    const auto g = run_trial_forward(make_plan(net, TimingMode::kGrid), t);
    const auto e = run_trial_forward(make_plan(net, TimingMode::kExact), t);
    for (std::size_t k = 0; k < g.outputs.size(); ++k) {
      EXPECT_NEAR(g.outputs[k].v_max, e.outputs[k].v_max, 1e-12);
      EXPECT_EQ(g.outputs[k].t_max, e.outputs[k].t_max);
      EXPECT_NEAR(g.outputs[k].v_integral, e.outputs[k].v_integral, 1e-10);
    }
  }
}

TEST(Forward, Deterministic) {
  RandomNetConfig rc;
  rc.recurrent = true;
  const Network net = random_network(rc, 2);
  const auto t = random_trials(rc.inputs, rc.outputs, 1, 12, 20.0, 3)[0];
  for (auto mode : {TimingMode::kGrid, TimingMode::kExact}) {
    const SimPlan plan = make_plan(net, mode);
    const auto a = run_trial_forward(plan, t);
    const auto b = run_trial_forward(plan, t);
    ASSERT_EQ(a.spikes.size(), b.spikes.size());
    for (std::size_t k = 0; k < a.spikes.size(); ++k) EXPECT_EQ(a.spikes[k].time, b.spikes[k].time);
  }
}
