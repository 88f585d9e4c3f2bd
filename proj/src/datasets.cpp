#include "delayprop/datasets.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <type_traits>

#include "delayprop/errors.hpp"

namespace delayprop {

namespace {

void sort_events(TrialInput& t) {
  std::stable_sort(t.events.begin(), t.events.end(),
                   [](const InputEvent& a, const InputEvent& b) { return a.time < b.time; });
}

}  // namespace

void check_dataset(const SpikeDataset& ds) {
  for (std::size_t k = 0; k < ds.trials.size(); ++k) {
    const auto& t = ds.trials[k];
    const std::string where = ds.name + " trial " + std::to_string(k);
    if (t.label < 0 || static_cast<std::size_t>(t.label) >= ds.n_classes)
      throw ConfigError(where + ": label out of range");
    for (const auto& ev : t.events) {
      if (ev.channel >= ds.n_channels) throw ConfigError(where + ": channel out of range");
      if (!(ev.time >= 0.0 && ev.time < ds.duration)) throw ConfigError(where + ": event time outside [0, T)");
    }
  }
}

SpikeDataset gen_sequence_task(double gap, double duration) {
  SpikeDataset ds;
  ds.name = "sequence";
  ds.n_channels = 2;
  ds.n_classes = 2;
  ds.duration = duration;
  ds.dt = 0.1;
  ds.trials.push_back(TrialInput{{{0, 0.0}, {1, gap}}, 0});
  ds.trials.push_back(TrialInput{{{1, 0.0}, {0, gap}}, 1});
  return ds;
}

int yinyang_class(double x, double y, const YinYangConfig& cfg) {
  const double d_right = std::hypot(x - 1.5 * cfg.r_big, y - cfg.r_big);
  const double d_left = std::hypot(x - 0.5 * cfg.r_big, y - cfg.r_big);
  if (d_right < cfg.r_small || d_left < cfg.r_small) return 2;
  const bool yin = d_right <= cfg.r_small || (d_left > cfg.r_small && d_left <= 0.5 * cfg.r_big) ||
                   (y > cfg.r_big && d_right > 0.5 * cfg.r_big);
  return yin ? 0 : 1;
}

std::vector<std::array<double, 2>> yinyang_points(std::size_t n, std::uint64_t seed, const YinYangConfig& cfg,
                                                  std::vector<int>* labels) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> goal_dist(0, 2);
  std::uniform_real_distribution<double> coord(0.0, 2.0 * cfg.r_big);
  std::vector<std::array<double, 2>> pts;
  if (labels) labels->clear();
  for (std::size_t k = 0; k < n; ++k) {
    const int goal = goal_dist(rng);
    for (;;) {
      const double x = coord(rng);
      const double y = coord(rng);
      if (std::hypot(x - cfg.r_big, y - cfg.r_big) > cfg.r_big) continue;
      if (yinyang_class(x, y, cfg) != goal) continue;
      pts.push_back({x, y});
      if (labels) labels->push_back(goal);
      break;
    }
  }
  return pts;
}

SpikeDataset gen_yinyang(std::size_t n, std::uint64_t seed, const YinYangConfig& cfg) {
  if (n == 0) throw ConfigError("yinyang: sample count must be > 0");
  SpikeDataset ds;
  ds.name = "yinyang";
  ds.n_channels = cfg.bias ? 5 : 4;
  ds.n_classes = 3;
  ds.duration = cfg.duration;
  ds.dt = cfg.dt;
  std::vector<int> labels;
  const auto pts = yinyang_points(n, seed, cfg, &labels);
  const double span = cfg.t_late - cfg.t_early;
  for (std::size_t k = 0; k < n; ++k) {
    const double x = pts[k][0];
    const double y = pts[k][1];
    TrialInput t;
    t.label = labels[k];
    const std::array<double, 4> v = {x, y, 1.0 - x, 1.0 - y};
    for (std::uint32_t c = 0; c < 4; ++c) t.events.push_back({c, cfg.t_early + v[c] * span});
    if (cfg.bias) t.events.push_back({4, cfg.t_early});
    sort_events(t);
    ds.trials.push_back(std::move(t));
  }
  return ds;
}

SpikeDataset gen_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  SpikeDataset ds;
  ds.name = "synthetic";
  ds.n_channels = cfg.n_groups * cfg.group_size;
  ds.n_classes = cfg.n_classes;
  ds.duration = cfg.duration;
  ds.dt = cfg.dt;

  // Distinct group orders per class.
  std::vector<std::vector<std::size_t>> orders;
  std::vector<std::size_t> order(cfg.n_groups);
  std::iota(order.begin(), order.end(), 0);
  std::size_t attempts = 0;
  while (orders.size() < cfg.n_classes) {
    if (++attempts > 10000) throw ConfigError("synthetic: not enough distinct group orders for the class count");
    std::shuffle(order.begin(), order.end(), rng);
    if (std::find(orders.begin(), orders.end(), order) == orders.end()) orders.push_back(order);
  }

  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> jitter(-cfg.jitter, cfg.jitter);
  std::poisson_distribution<int> noise_count(cfg.noise_rate * cfg.duration / 1000.0);
  const double spacing = cfg.duration / static_cast<double>(cfg.n_groups + 1);
  for (std::size_t k = 0; k < cfg.n_trials; ++k) {
    TrialInput t;
    t.label = static_cast<std::int32_t>(k % cfg.n_classes);
    const auto& ord = orders[static_cast<std::size_t>(t.label)];
    for (std::size_t pos = 0; pos < cfg.n_groups; ++pos) {
      const double centre = spacing * static_cast<double>(pos + 1);
      for (std::size_t c = 0; c < cfg.group_size; ++c) {
        if (unit(rng) >= cfg.keep) continue;
        const double time = centre + jitter(rng);
        if (time < 0.0 || time >= cfg.duration) continue;
        t.events.push_back({static_cast<std::uint32_t>(ord[pos] * cfg.group_size + c), time});
      }
    }
    for (std::size_t ch = 0; ch < ds.n_channels; ++ch) {
      const int count = noise_count(rng);
      for (int e = 0; e < count; ++e) t.events.push_back({static_cast<std::uint32_t>(ch), unit(rng) * cfg.duration});
    }
    // Quantise to the file resolution so the dataset round-trips exactly.
    for (auto& ev : t.events) {
      ev.time = std::nearbyint(ev.time / cfg.dt) * cfg.dt;
      if (ev.time >= cfg.duration) ev.time -= cfg.dt;
    }
    sort_events(t);
    ds.trials.push_back(std::move(t));
  }
  return ds;
}

TrialInput shift_augment(const TrialInput& trial, int shift, std::size_t n_channels) {
  TrialInput out;
  out.label = trial.label;
  for (const auto& ev : trial.events) {
    const long c = static_cast<long>(ev.channel) + shift;
    if (c < 0 || c >= static_cast<long>(n_channels)) continue;
    out.events.push_back({static_cast<std::uint32_t>(c), ev.time});
  }
  return out;
}

int sample_shift(std::mt19937_64& rng, int max_shift) {
  return std::uniform_int_distribution<int>(-max_shift, max_shift)(rng);
}

TrialInput blend_augment(const TrialInput& a, const TrialInput& b, std::mt19937_64& rng, double duration, double p) {
  if (a.label != b.label) throw ConfigError("blend_augment needs trials of the same class");
  auto centre = [](const TrialInput& t) {
    if (t.events.empty()) return 0.0;
    double s = 0.0;
    for (const auto& ev : t.events) s += ev.time;
    return s / static_cast<double>(t.events.size());
  };
  const double offset = a.events.empty() || b.events.empty() ? 0.0 : centre(a) - centre(b);
  std::bernoulli_distribution keep(p);
  TrialInput out;
  out.label = a.label;
  for (const auto& ev : a.events)
    if (keep(rng)) out.events.push_back(ev);
  for (const auto& ev : b.events) {
    if (!keep(rng)) continue;
    const double t = ev.time + offset;
    if (t >= 0.0 && t < duration) out.events.push_back({ev.channel, t});
  }
  sort_events(out);
  return out;
}

// ---------------------------------------------------------------------------

namespace {

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <typename T>
  void put(T value) {
    unsigned char bytes[sizeof(T)];
    std::uint64_t bits = 0;
    if constexpr (std::is_floating_point_v<T>) {
      std::memcpy(&bits, &value, sizeof(T));
    } else {
      bits = static_cast<std::uint64_t>(value);
    }
    for (std::size_t k = 0; k < sizeof(T); ++k) bytes[k] = static_cast<unsigned char>(bits >> (8 * k));
    out_.write(reinterpret_cast<const char*>(bytes), sizeof(T));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}
  template <typename T>
  T get() {
    unsigned char bytes[sizeof(T)];
    if (!in_.read(reinterpret_cast<char*>(bytes), sizeof(T))) throw ConfigError(path_ + ": truncated event file");
    std::uint64_t bits = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) bits |= static_cast<std::uint64_t>(bytes[k]) << (8 * k);
    if constexpr (std::is_floating_point_v<T>) {
      T value;
      std::memcpy(&value, &bits, sizeof(T));
      return value;
    } else {
      return static_cast<T>(bits);
    }
  }

 private:
  std::istream& in_;
  std::string path_;
};

}  // namespace

void save_events(const SpikeDataset& ds, const std::filesystem::path& path) {
  check_dataset(ds);
  if (ds.n_channels > 65536) throw ConfigError("event format supports at most 65536 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path.string());
  Writer w(out);
  out.write("DPEV", 4);
  w.put<std::uint32_t>(kEventFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.n_channels));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.n_classes));
  w.put<double>(ds.duration);
  w.put<double>(ds.dt);
  w.put<std::uint64_t>(ds.trials.size());
  for (const auto& t : ds.trials) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.label));
    w.put<std::uint64_t>(t.events.size());
    for (const auto& ev : t.events) {
      w.put<std::uint16_t>(static_cast<std::uint16_t>(ev.channel));
      w.put<std::uint32_t>(static_cast<std::uint32_t>(std::nearbyint(ev.time / ds.dt)));
    }
  }
  if (!out) throw ConfigError("error writing " + path.string());
}

SpikeDataset load_events(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  Reader r(in, path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, "DPEV", 4) != 0)
    throw ConfigError(path.string() + ": not an event file (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kEventFormatVersion)
    throw ConfigError(path.string() + ": unknown event file version " + std::to_string(version));
  SpikeDataset ds;
  ds.name = path.stem().string();
  ds.n_channels = r.get<std::uint32_t>();
  ds.n_classes = r.get<std::uint32_t>();
  ds.duration = r.get<double>();
  ds.dt = r.get<double>();
  if (!(ds.dt > 0.0) || !(ds.duration > 0.0)) throw ConfigError(path.string() + ": malformed header");
  const auto n_trials = r.get<std::uint64_t>();
  for (std::uint64_t k = 0; k < n_trials; ++k) {
    TrialInput t;
    const auto label = r.get<std::uint32_t>();
    if (label >= ds.n_classes) throw ConfigError(path.string() + ": label out of declared bounds");
    t.label = static_cast<std::int32_t>(label);
    const auto n_events = r.get<std::uint64_t>();
    for (std::uint64_t e = 0; e < n_events; ++e) {
      const auto channel = r.get<std::uint16_t>();
      const auto step = r.get<std::uint32_t>();
      const double time = static_cast<double>(step) * ds.dt;
      if (channel >= ds.n_channels || !(time < ds.duration))
        throw ConfigError(path.string() + ": event out of declared bounds");
      t.events.push_back({channel, time});
    }
    sort_events(t);
    ds.trials.push_back(std::move(t));
  }
  return ds;
}

std::vector<SpikeDataset> split(const SpikeDataset& ds, const std::vector<std::size_t>& sizes) {
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total > ds.trials.size()) throw ConfigError("split sizes exceed dataset size");
  std::vector<SpikeDataset> parts;
  std::size_t at = 0;
  for (std::size_t size : sizes) {
    SpikeDataset part = ds;
    part.trials.assign(ds.trials.begin() + static_cast<std::ptrdiff_t>(at),
                       ds.trials.begin() + static_cast<std::ptrdiff_t>(at + size));
    parts.push_back(std::move(part));
    at += size;
  }
  return parts;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, std::mt19937_64* rng) {
  if (batch_size == 0) throw ConfigError("batch size must be > 0");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (rng) std::shuffle(order.begin(), order.end(), *rng);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < n; at += batch_size)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, at + batch_size)));
  return batches;
}

}  // namespace delayprop
