#include <gtest/gtest.h>

#include "delayprop/gradcheck.hpp"

using namespace delayprop;

TEST(GradCheck, SmallRecurrentNetPasses) {
  RandomNetConfig rc;
  rc.recurrent = true;
  rc.hidden = {3};
  rc.weight_mean = 1.5;
  rc.weight_sd = 0.8;
  const Network net = random_network(rc, 1);
  const auto trials = random_trials(rc.inputs, rc.outputs, 2, 8, 20.0, 1);
  LossSpec loss;
  const auto report = check_all(net, trials, loss);
  EXPECT_GT(report.valid, 0u);
  EXPECT_TRUE(report.pass) << report.verdict();
}

TEST(GradCheck, DeltaMseOnSpikingReadout) {
  RandomNetConfig rc;
  rc.output_kind = LayerKind::kOutputLif;
  rc.weight_mean = 2.0;
  rc.weight_sd = 0.5;
  rc.delay_lo = 0.5;
  const Network net = random_network(rc, 4);
  const auto trials = random_trials(rc.inputs, rc.outputs, 2, 8, 15.0, 2);
  LossSpec loss;
  loss.kind = LossKind::kDeltaMse;
  const auto report = check_all(net, trials, loss);
  EXPECT_TRUE(report.pass) << report.verdict();
}

TEST(GradCheck, SmoothReadoutMatchesFiniteDifference) {
  // An LI readout driven by one input is smooth in the weight: the loss is
  // a softmax of values linear in w, so the central difference converges.
  RandomNetConfig rc;
  rc.hidden = {};
  rc.inputs = 2;
  const Network net = random_network(rc, 9);
  const auto trials = random_trials(2, 2, 1, 4, 20.0, 3);
  LossSpec loss;
  loss.kind = LossKind::kAvgVoltageCe;
  const auto exact = exact_gradient(net, trials, loss, TimingMode::kExact);
  const auto fd = fd_richardson(net, trials, loss, {0, 1, false}, 1e-3, TimingMode::kExact);
  ASSERT_TRUE(fd.valid);
  EXPECT_NEAR(fd.value, exact.dw[0][1], 1e-9);
}

TEST(GradCheck, SignatureDetectsStructureChange) {
  RandomNetConfig rc;
  rc.weight_mean = 1.5;
  const Network net = random_network(rc, 5);
  const auto trials = random_trials(rc.inputs, rc.outputs, 1, 8, 20.0, 5);
  Signature a, b;
  total_loss(net, trials, LossSpec{}, TimingMode::kExact, &a);
  Network muted = net;
  for (auto& w : muted.groups[0].weights.flat()) w = 0.0;
  total_loss(muted, trials, LossSpec{}, TimingMode::kExact, &b);
  EXPECT_FALSE(a == b);
}
