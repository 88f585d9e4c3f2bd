#include <gtest/gtest.h>

#include "delayprop/batch.hpp"
#include "delayprop/gradcheck.hpp"

using namespace delayprop;

namespace {

void expect_identical(const BatchResult& a, const BatchResult& b) {
  EXPECT_EQ(a.loss, b.loss);
  EXPECT_EQ(a.reg, b.reg);
  EXPECT_EQ(a.count, b.count);
  EXPECT_EQ(a.correct, b.correct);
  EXPECT_EQ(a.hidden_spikes, b.hidden_spikes);
  ASSERT_EQ(a.grads.dw.size(), b.grads.dw.size());
  for (std::size_t g = 0; g < a.grads.dw.size(); ++g) {
    EXPECT_EQ(a.grads.dw[g], b.grads.dw[g]);
    EXPECT_EQ(a.grads.dd[g], b.grads.dd[g]);
  }
}

}  // namespace

TEST(Batch, ParallelIsBitIdenticalToSerial) {
  RandomNetConfig rc;
  rc.recurrent = true;
  rc.hidden = {16};
  rc.weight_mean = 1.2;
  rc.delay_hi = 8.0;
  const Network net = random_network(rc, 21);
  const auto trials = random_trials(rc.inputs, rc.outputs, 37, 12, 30.0, 5);
  std::vector<const TrialInput*> ptrs;
  for (const auto& t : trials) ptrs.push_back(&t);
  for (auto mode : {TimingMode::kGrid, TimingMode::kExact}) {
    const SimPlan plan = make_plan(net, mode);
    for (auto kind : {LossKind::kMaxVoltageCe, LossKind::kAvgVoltageCe}) {
      LossSpec loss;
      loss.kind = kind;
      loss.regularizers.push_back({1, 1e-3, 1.0});
      const auto serial = run_batch_serial(plan, ptrs, loss, true);
      for (int workers : {1, 2, 3, 8}) expect_identical(serial, run_batch_parallel(plan, ptrs, loss, true, workers));
    }
  }
}

TEST(Batch, SumMatchesPerTrialRuns) {
  RandomNetConfig rc;
  rc.weight_mean = 1.5;
  const Network net = random_network(rc, 2);
  const auto trials = random_trials(rc.inputs, rc.outputs, 5, 10, 20.0, 8);
  std::vector<const TrialInput*> ptrs;
  for (const auto& t : trials) ptrs.push_back(&t);
  const SimPlan plan = make_plan(net, TimingMode::kGrid);
  const LossSpec loss;
  const auto batch = run_batch_serial(plan, ptrs, loss, true);
  GradientStore sum = GradientStore::zeros_like(plan);
  double total = 0.0;
  for (const auto& t : trials) {
    GradientStore g = GradientStore::zeros_like(plan);
    total += run_trial(plan, t, loss, &g).loss;
    sum.add(g);
  }
  EXPECT_EQ(batch.loss, total);
  for (std::size_t g = 0; g < sum.dw.size(); ++g) EXPECT_EQ(batch.grads.dw[g], sum.dw[g]);
}

TEST(Batch, WithoutGradientsLeavesStoreEmpty) {
  RandomNetConfig rc;
  const Network net = random_network(rc, 2);
  const auto trials = random_trials(rc.inputs, rc.outputs, 3, 10, 20.0, 8);
  std::vector<const TrialInput*> ptrs;
  for (const auto& t : trials) ptrs.push_back(&t);
  const auto r = run_batch_parallel(make_plan(net, TimingMode::kGrid), ptrs, LossSpec{}, false, 2);
  EXPECT_EQ(r.count, 3u);
  for (const auto& m : r.grads.dw)
    for (double v : m.flat()) EXPECT_EQ(v, 0.0);
}
