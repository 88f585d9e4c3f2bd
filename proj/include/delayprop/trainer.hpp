#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "delayprop/datasets.hpp"
#include "delayprop/forward.hpp"
#include "delayprop/losses.hpp"
#include "delayprop/network.hpp"
#include "delayprop/optimizer.hpp"

namespace delayprop {

struct RegularizerConfig {
  std::string layer;
  double k_reg = 0.0;
  double target = 0.0;
};

struct DataConfig {
  std::string generator;  // "yinyang", "sequence", "synthetic" or empty for files
  std::filesystem::path train_file, valid_file, test_file;
  std::size_t train_size = 5000;
  std::size_t valid_size = 1000;
  std::size_t test_size = 1000;
  std::uint64_t seed = 0;
  YinYangConfig yinyang;
  SyntheticConfig synthetic;
  double sequence_gap = 10.0;
};

struct AugmentConfig {
  bool shift = false;
  int max_shift = 40;
  bool blend = false;
  double blend_probability = 0.5;  // chance a training trial is replaced by a blend
};

enum class StopMetric { kNone, kTrainAccuracy, kValidAccuracy };

struct RunConfig {
  std::string name = "run";
  NetworkSpec network;
  TimingMode timing = TimingMode::kGrid;
  DataConfig data;
  LossKind loss = LossKind::kMaxVoltageCe;
  double delta_t = 0.5;
  std::vector<RegularizerConfig> regularizers;
  OptimizerConfig optimizer;
  std::size_t batch_size = 32;
  std::size_t epochs = 100;
  std::size_t patience = 15;
  StopMetric stop_metric = StopMetric::kNone;
  bool shuffle = true;
  AugmentConfig augment;
  std::uint64_t seed = 0;
  int workers = 0;  // 0 = OpenMP default
  std::filesystem::path out_dir;
  bool dump_traces = false;
};

RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Output directory: explicit value, else $DELAYPROP_OUT/<name>, else runs/<name>.
std::filesystem::path resolve_out_dir(const RunConfig& cfg);

LossSpec resolve_loss(const RunConfig& cfg, const Network& net);

struct DataSplits {
  SpikeDataset train;
  std::optional<SpikeDataset> valid;
  std::optional<SpikeDataset> test;
};

DataSplits load_data(const RunConfig& cfg);

struct MetricsRecord {
  std::size_t epoch = 0;
  std::string split;
  double loss = 0.0;
  double reg = 0.0;
  double accuracy = 0.0;
  double mean_hidden_spikes = 0.0;
  std::size_t guard_activations = 0;
  std::size_t silent_trials = 0;
  double wall_time = 0.0;  // seconds
  double weight_lr = 0.0;
  double delay_lr = 0.0;

  nlohmann::json to_json() const;
};

MetricsRecord evaluate(const Network& net, const SpikeDataset& data, const LossSpec& loss, TimingMode mode,
                       int workers);

struct TrainSummary {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_metric = 0.0;
  bool stopped_early = false;
  std::optional<double> test_accuracy;  // of the best checkpoint
  std::optional<double> final_train_accuracy;
  std::vector<MetricsRecord> records;
  Network final_network;
  Network best_network;
};

struct TrainHooks {
  // Called after each epoch's records are written; returning false stops.
  std::function<bool(const std::vector<MetricsRecord>&)> on_epoch;
  bool quiet = true;
};

// Runs (or resumes, when out_dir holds a checkpoint and resume is set) the
// configured training loop. Writes metrics.jsonl, metrics.csv, best.json and
// checkpoint.json into the output directory.
TrainSummary train(const RunConfig& cfg, bool resume = false, const TrainHooks& hooks = {});

}  // namespace delayprop
