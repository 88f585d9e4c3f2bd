#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "delayprop/trial.hpp"

namespace delayprop {

struct SpikeDataset {
  std::string name;
  std::size_t n_channels = 0;
  std::size_t n_classes = 0;
  double duration = 0.0;  // ms
  double dt = 1.0;        // time resolution of the event file
  std::vector<TrialInput> trials;

  bool operator==(const SpikeDataset&) const = default;
};

// Throws ConfigError if a trial violates channel, time or label bounds.
void check_dataset(const SpikeDataset& ds);

// Two trials on two channels: class 0 = (ch0 @ 0, ch1 @ gap), class 1 the
// reverse order.
SpikeDataset gen_sequence_task(double gap = 10.0, double duration = 50.0);

struct YinYangConfig {
  double r_small = 0.1;
  double r_big = 0.5;
  double t_early = 2.0;
  double t_late = 28.0;
  double duration = 30.0;
  double dt = 0.01;  // resolution used when saved to an event file
  bool bias = true;
};

// 0 yin, 1 yang, 2 dot, for a point inside the big disk.
int yinyang_class(double x, double y, const YinYangConfig& cfg = {});

// Class-balanced rejection sampling; every point becomes up to five spikes:
// x, y, 1 - x, 1 - y mapped linearly onto [t_early, t_late] and a bias spike
// at t_early.
SpikeDataset gen_yinyang(std::size_t n, std::uint64_t seed, const YinYangConfig& cfg = {});
std::vector<std::array<double, 2>> yinyang_points(std::size_t n, std::uint64_t seed, const YinYangConfig& cfg,
                                                  std::vector<int>* labels);

// Each class replays a fixed random order of channel groups; trials add
// timing jitter, dropped spikes and background noise.
struct SyntheticConfig {
  std::size_t n_trials = 200;
  std::size_t n_classes = 5;
  std::size_t n_groups = 4;
  std::size_t group_size = 6;
  double duration = 100.0;
  double dt = 1.0;
  double jitter = 2.0;     // ms, uniform +-
  double keep = 0.9;       // probability a pattern spike is present
  double noise_rate = 2.0; // background spikes per channel per second
};

SpikeDataset gen_synthetic(const SyntheticConfig& cfg, std::uint64_t seed);

// Channel shift; events pushed outside [0, n_channels) are dropped.
TrialInput shift_augment(const TrialInput& trial, int shift, std::size_t n_channels);
int sample_shift(std::mt19937_64& rng, int max_shift = 40);

// Aligns b's spike-time centre of mass onto a's, then keeps every event of
// the union independently with probability p; times outside [0, T) are dropped.
TrialInput blend_augment(const TrialInput& a, const TrialInput& b, std::mt19937_64& rng, double duration,
                         double p = 0.5);

// Binary event file, little-endian:
//   "DPEV" u32 version u32 n_channels u32 n_classes f64 T f64 dt u64 n_trials
//   per trial: u32 label u64 n_events, then n_events x (u16 channel, u32 step)
inline constexpr std::uint32_t kEventFormatVersion = 1;
void save_events(const SpikeDataset& ds, const std::filesystem::path& path);
SpikeDataset load_events(const std::filesystem::path& path);

// Consecutive pieces of the given sizes (sum must not exceed the trial count).
std::vector<SpikeDataset> split(const SpikeDataset& ds, const std::vector<std::size_t>& sizes);

// Trial indices grouped into batches after a seeded shuffle.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::mt19937_64* rng);

}  // namespace delayprop
