#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <vector>

#include "delayprop/forward.hpp"

namespace delayprop {

struct BenchDelaysConfig {
  std::vector<std::int32_t> d_max = {32, 64, 128, 256, 512};
  std::size_t inputs = 64;
  std::vector<std::size_t> hidden = {256, 256};
  std::size_t outputs = 10;
  std::size_t trials = 64;
  std::size_t batch_size = 32;
  std::size_t events_per_trial = 200;
  double duration = 100.0;
  double dt = 1.0;
  double delay_hi = 16.0;  // initial delays ~ U(0, delay_hi), identical for every D_max
  std::size_t repeats = 3;  // timed epochs per D_max; the fastest is reported
  int workers = 0;
  std::uint64_t seed = 7;
};

struct BenchDelaysRow {
  std::int32_t d_max = 0;
  std::size_t neurons = 0;
  std::size_t synapses = 0;
  // neurons x (D_max+1) x 3 doubles: one forward accumulator plus the
  // (lam_V, lam_I) history pair.
  std::size_t analytic_buffer_bytes = 0;
  std::size_t allocated_buffer_bytes = 0;  // DelayBuffer + AdjointHistory as built
  std::size_t per_synapse_bytes = 0;
  std::size_t peak_rss_kb = 0;
  double epoch_seconds = 0.0;
};

std::vector<BenchDelaysRow> bench_delays(const BenchDelaysConfig& cfg);
void write_bench_csv(const std::vector<BenchDelaysRow>& rows, std::ostream& out);

// VmHWM from /proc/self/status, 0 when unavailable.
std::size_t peak_rss_kb();

}  // namespace delayprop
