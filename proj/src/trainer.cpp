#include "delayprop/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "delayprop/batch.hpp"
#include "delayprop/json_io.hpp"

namespace delayprop {

using nlohmann::json;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

Schedule parse_schedule(const json& j, const char* key, const Schedule& defaults) {
  Schedule s = defaults;
  s.kind = schedule_kind_from_string(get_or<std::string>(j, key, "constant"));
  s.decay = get_or(j, "decay", s.decay);
  s.growth = get_or(j, "growth", s.growth);
  s.start = get_or(j, "ease_start", s.start);
  return s;
}

StopMetric stop_metric_from_string(const std::string& s) {
  if (s == "none") return StopMetric::kNone;
  if (s == "train_accuracy") return StopMetric::kTrainAccuracy;
  if (s == "valid_accuracy") return StopMetric::kValidAccuracy;
  throw ConfigError("unknown early_stopping metric '" + s + "'");
}

std::filesystem::path resolve_path(const std::filesystem::path& base, const std::string& p) {
  if (p.empty()) return {};
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  try {
    RunConfig cfg;
    cfg.name = get_or<std::string>(doc, "name", cfg.name);
    if (doc.contains("network")) {
      cfg.network = parse_network_spec(doc.at("network"));
    } else if (doc.contains("network_file")) {
      const auto path = resolve_path(base_dir, doc.at("network_file").get<std::string>());
      std::ifstream in(path);
      if (!in) throw ConfigError("cannot open network file " + path.string());
      std::stringstream buf;
      buf << in.rdbuf();
      cfg.network = network_spec_from_json(buf.str());
    } else {
      throw ConfigError("run config needs 'network' or 'network_file'");
    }
    cfg.timing = timing_mode_from_string(get_or<std::string>(doc, "timing", "grid"));

    const json data = doc.value("data", json::object());
    auto& d = cfg.data;
    d.generator = get_or<std::string>(data, "generator", "");
    d.train_file = resolve_path(base_dir, get_or<std::string>(data, "train", ""));
    d.valid_file = resolve_path(base_dir, get_or<std::string>(data, "valid", ""));
    d.test_file = resolve_path(base_dir, get_or<std::string>(data, "test", ""));
    d.train_size = get_or(data, "train_size", d.train_size);
    d.valid_size = get_or(data, "valid_size", d.valid_size);
    d.test_size = get_or(data, "test_size", d.test_size);
    d.seed = get_or(data, "seed", d.seed);
    d.sequence_gap = get_or(data, "sequence_gap", d.sequence_gap);
    if (data.contains("yinyang")) {
      const auto& y = data.at("yinyang");
      d.yinyang.r_small = get_or(y, "r_small", d.yinyang.r_small);
      d.yinyang.r_big = get_or(y, "r_big", d.yinyang.r_big);
      d.yinyang.t_early = get_or(y, "t_early", d.yinyang.t_early);
      d.yinyang.t_late = get_or(y, "t_late", d.yinyang.t_late);
      d.yinyang.duration = get_or(y, "duration", d.yinyang.duration);
      d.yinyang.dt = get_or(y, "dt", d.yinyang.dt);
      d.yinyang.bias = get_or(y, "bias", d.yinyang.bias);
    }
    if (data.contains("synthetic")) {
      const auto& s = data.at("synthetic");
      d.synthetic.n_trials = get_or(s, "trials", d.synthetic.n_trials);
      d.synthetic.n_classes = get_or(s, "classes", d.synthetic.n_classes);
      d.synthetic.n_groups = get_or(s, "groups", d.synthetic.n_groups);
      d.synthetic.group_size = get_or(s, "group_size", d.synthetic.group_size);
      d.synthetic.duration = get_or(s, "duration", d.synthetic.duration);
      d.synthetic.dt = get_or(s, "dt", d.synthetic.dt);
      d.synthetic.jitter = get_or(s, "jitter", d.synthetic.jitter);
      d.synthetic.keep = get_or(s, "keep", d.synthetic.keep);
      d.synthetic.noise_rate = get_or(s, "noise_rate", d.synthetic.noise_rate);
    }

    const json loss = doc.value("loss", json::object());
    cfg.loss = loss_kind_from_string(get_or<std::string>(loss, "kind", "max_voltage_ce"));
    cfg.delta_t = get_or(loss, "delta_t", cfg.delta_t);
    for (const auto& r : loss.value("regularizers", json::array()))
      cfg.regularizers.push_back({r.at("layer").get<std::string>(), r.at("k_reg").get<double>(),
                                  r.at("target").get<double>()});

    const json opt = doc.value("optimizer", json::object());
    auto& o = cfg.optimizer;
    o.kind = optimizer_kind_from_string(get_or<std::string>(opt, "kind", "adam"));
    o.weight_lr = get_or(opt, "weight_lr", o.weight_lr);
    o.delay_lr = get_or(opt, "delay_lr", o.delay_lr);
    o.weight_schedule = parse_schedule(opt, "weight_schedule", o.weight_schedule);
    o.delay_schedule = parse_schedule(opt, "delay_schedule", o.delay_schedule);
    o.adam.beta1 = get_or(opt, "beta1", o.adam.beta1);
    o.adam.beta2 = get_or(opt, "beta2", o.adam.beta2);
    o.adam.eps = get_or(opt, "eps", o.adam.eps);

    cfg.batch_size = get_or(doc, "batch_size", cfg.batch_size);
    cfg.epochs = get_or(doc, "epochs", cfg.epochs);
    cfg.patience = get_or(doc, "patience", cfg.patience);
    cfg.stop_metric = stop_metric_from_string(get_or<std::string>(doc, "early_stopping", "none"));
    cfg.shuffle = get_or(doc, "shuffle", cfg.shuffle);
    const json aug = doc.value("augment", json::object());
    cfg.augment.shift = get_or(aug, "shift", cfg.augment.shift);
    cfg.augment.max_shift = get_or(aug, "max_shift", cfg.augment.max_shift);
    cfg.augment.blend = get_or(aug, "blend", cfg.augment.blend);
    cfg.augment.blend_probability = get_or(aug, "blend_probability", cfg.augment.blend_probability);
    cfg.seed = get_or(doc, "seed", cfg.seed);
    cfg.workers = get_or(doc, "workers", cfg.workers);
    cfg.out_dir = resolve_path(base_dir, get_or<std::string>(doc, "out", ""));
    if (cfg.batch_size == 0) throw ConfigError("batch_size must be > 0");
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed run config: ") + e.what());
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

std::filesystem::path resolve_out_dir(const RunConfig& cfg) {
  if (!cfg.out_dir.empty()) return cfg.out_dir;
  if (const char* env = std::getenv("DELAYPROP_OUT"); env && *env) return std::filesystem::path(env) / cfg.name;
  return std::filesystem::path("runs") / cfg.name;
}

LossSpec resolve_loss(const RunConfig& cfg, const Network& net) {
  LossSpec spec;
  spec.kind = cfg.loss;
  spec.delta_t = cfg.delta_t;
  for (const auto& r : cfg.regularizers) {
    std::size_t layer = net.layers.size();
    for (std::size_t l = 0; l < net.layers.size(); ++l)
      if (net.layers[l].name == r.layer) layer = l;
    if (layer == net.layers.size()) throw ConfigError("regularizer references unknown layer '" + r.layer + "'");
    if (r.k_reg < 0.0) throw ConfigError("k_reg must be >= 0");
    spec.regularizers.push_back({layer, r.k_reg, r.target});
  }
  return spec;
}

DataSplits load_data(const RunConfig& cfg) {
  const auto& d = cfg.data;
  DataSplits s;
  if (d.generator == "yinyang") {
    const auto all = gen_yinyang(d.train_size + d.valid_size + d.test_size, d.seed, d.yinyang);
    auto parts = split(all, {d.train_size, d.valid_size, d.test_size});
    s.train = std::move(parts[0]);
    if (d.valid_size > 0) s.valid = std::move(parts[1]);
    if (d.test_size > 0) s.test = std::move(parts[2]);
  } else if (d.generator == "sequence") {
    s.train = gen_sequence_task(d.sequence_gap, cfg.network.duration);
  } else if (d.generator == "synthetic") {
    s.train = gen_synthetic(d.synthetic, d.seed);
  } else if (d.generator.empty()) {
    if (d.train_file.empty()) throw ConfigError("data needs a generator or a train file");
    s.train = load_events(d.train_file);
    if (!d.valid_file.empty()) s.valid = load_events(d.valid_file);
    if (!d.test_file.empty()) s.test = load_events(d.test_file);
  } else {
    throw ConfigError("unknown data generator '" + d.generator + "'");
  }
  return s;
}

json MetricsRecord::to_json() const {
  return {{"epoch", epoch},
          {"split", split},
          {"loss", loss},
          {"reg", reg},
          {"accuracy", accuracy},
          {"mean_hidden_spikes", mean_hidden_spikes},
          {"guard_activations", guard_activations},
          {"silent_trials", silent_trials},
          {"wall_time", wall_time},
          {"weight_lr", weight_lr},
          {"delay_lr", delay_lr}};
}

namespace {

void check_compatible(const Network& net, const SpikeDataset& data) {
  const auto& in = net.layers[net.input_layer()];
  const auto& out = net.layers[net.output_layer()];
  if (data.n_channels > in.size)
    throw ConfigError("dataset '" + data.name + "' has " + std::to_string(data.n_channels) +
                      " channels but the input layer has " + std::to_string(in.size));
  if (data.n_classes > out.size)
    throw ConfigError("dataset '" + data.name + "' has " + std::to_string(data.n_classes) +
                      " classes but the output layer has " + std::to_string(out.size));
  if (data.duration > net.duration + 1e-9)
    throw ConfigError("dataset '" + data.name + "' is longer than the simulated duration");
}

MetricsRecord record_from(const BatchResult& b, std::size_t epoch, const std::string& split, double seconds) {
  MetricsRecord r;
  r.epoch = epoch;
  r.split = split;
  const double n = static_cast<double>(std::max<std::size_t>(b.count, 1));
  r.loss = b.loss / n;
  r.reg = b.reg / n;
  r.accuracy = static_cast<double>(b.correct) / n;
  r.mean_hidden_spikes = static_cast<double>(b.hidden_spikes) / n;
  r.guard_activations = b.guard_activations;
  r.silent_trials = b.silent_trials;
  r.wall_time = seconds;
  return r;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

MetricsRecord evaluate(const Network& net, const SpikeDataset& data, const LossSpec& loss, TimingMode mode,
                       int workers) {
  if (data.trials.empty()) throw ConfigError("cannot evaluate on an empty dataset");
  check_compatible(net, data);
  const auto t0 = std::chrono::steady_clock::now();
  const SimPlan plan = make_plan(net, mode);
  std::vector<const TrialInput*> ptrs;
  for (const auto& t : data.trials) ptrs.push_back(&t);
  const BatchResult b = run_batch_parallel(plan, ptrs, loss, false, workers);
  return record_from(b, 0, data.name, seconds_since(t0));
}

namespace {

struct TrainState {
  Network net;
  Network best;
  Optimizer optimizer;
  std::mt19937_64 rng;
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double best_metric = -1.0;
  std::size_t best_epoch = 0;
  std::size_t stale = 0;
};

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

void write_json(const std::filesystem::path& path, const json& j) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw ConfigError("cannot write " + tmp);
    out << j.dump(1) << '\n';
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& s) {
  write_json(path, {{"network", spec_to_json(to_spec(s.net))},
                    {"optimizer", s.optimizer.to_json()},
                    {"rng", rng_to_string(s.rng)},
                    {"epoch", s.epoch},
                    {"batch", s.batch},
                    {"best_metric", s.best_metric},
                    {"best_epoch", s.best_epoch},
                    {"stale", s.stale}});
}

void load_checkpoint(const std::filesystem::path& path, TrainState& s) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open checkpoint " + path.string());
  const json j = json::parse(in);
  s.net = build_network(parse_network_spec(j.at("network")));
  s.optimizer.load_json(j.at("optimizer"));
  std::istringstream rng(j.at("rng").get<std::string>());
  rng >> s.rng;
  s.epoch = j.at("epoch").get<std::size_t>();
  s.batch = j.at("batch").get<std::size_t>();
  s.best_metric = j.at("best_metric").get<double>();
  s.best_epoch = j.at("best_epoch").get<std::size_t>();
  s.stale = j.at("stale").get<std::size_t>();
}

std::vector<TrialInput> epoch_trials(const RunConfig& cfg, const SpikeDataset& train,
                                     const std::vector<std::vector<std::size_t>>& by_class, std::mt19937_64& rng) {
  std::vector<std::size_t> order(train.trials.size());
  for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
  if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
  std::vector<TrialInput> out;
  out.reserve(order.size());
  std::bernoulli_distribution blend(cfg.augment.blend_probability);
  for (std::size_t idx : order) {
    TrialInput t = train.trials[idx];
    if (cfg.augment.blend && blend(rng)) {
      const auto& pool = by_class[static_cast<std::size_t>(t.label)];
      const std::size_t other = pool[std::uniform_int_distribution<std::size_t>(0, pool.size() - 1)(rng)];
      t = blend_augment(t, train.trials[other], rng, train.duration);
    }
    if (cfg.augment.shift) t = shift_augment(t, sample_shift(rng, cfg.augment.max_shift), train.n_channels);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

TrainSummary train(const RunConfig& cfg, bool resume, const TrainHooks& hooks) {
  const auto out_dir = resolve_out_dir(cfg);
  std::filesystem::create_directories(out_dir);
  const auto checkpoint_path = out_dir / "checkpoint.json";
  const auto best_path = out_dir / "best.json";

  DataSplits data = load_data(cfg);
  TrainState s;
  s.net = build_network(cfg.network);
  check_compatible(s.net, data.train);
  if (data.valid) check_compatible(s.net, *data.valid);
  if (data.test) check_compatible(s.net, *data.test);
  if (cfg.stop_metric == StopMetric::kValidAccuracy && !data.valid)
    throw ConfigError("early stopping on validation accuracy needs a validation split");
  const LossSpec loss = resolve_loss(cfg, s.net);
  s.optimizer = Optimizer(cfg.optimizer, s.net);
  s.rng.seed(cfg.seed);
  s.best = s.net;

  const bool resuming = resume && std::filesystem::exists(checkpoint_path);
  if (resuming) {
    load_checkpoint(checkpoint_path, s);
    s.best = std::filesystem::exists(best_path) ? load_network(best_path) : s.net;
  }
  std::ofstream jsonl(out_dir / "metrics.jsonl", resuming ? std::ios::app : std::ios::trunc);
  const bool csv_exists = resuming && std::filesystem::exists(out_dir / "metrics.csv");
  std::ofstream csv(out_dir / "metrics.csv", csv_exists ? std::ios::app : std::ios::trunc);
  if (!jsonl || !csv) throw ConfigError("cannot write metrics into " + out_dir.string());
  if (!csv_exists)
    csv << "epoch,split,loss,reg,accuracy,mean_hidden_spikes,guard_activations,silent_trials,wall_time,weight_lr,"
           "delay_lr\n";

  std::vector<std::vector<std::size_t>> by_class(data.train.n_classes);
  for (std::size_t k = 0; k < data.train.trials.size(); ++k)
    by_class[static_cast<std::size_t>(data.train.trials[k].label)].push_back(k);

  TrainSummary summary;
  if (data.train.trials.empty()) throw ConfigError("training set is empty");

  while (s.epoch < cfg.epochs) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<TrialInput> trials = epoch_trials(cfg, data.train, by_class, s.rng);
    BatchResult total;
    StepReport lr;
    for (std::size_t at = 0; at < trials.size(); at += cfg.batch_size) {
      std::vector<const TrialInput*> batch;
      for (std::size_t k = at; k < std::min(trials.size(), at + cfg.batch_size); ++k) batch.push_back(&trials[k]);
      const SimPlan plan = make_plan(s.net, cfg.timing);
      BatchResult b = run_batch_parallel(plan, batch, loss, true, cfg.workers);
      if (!std::isfinite(b.loss) || !std::isfinite(b.reg)) throw NumericError("non-finite training loss", s.epoch);
      b.grads.scale(1.0 / static_cast<double>(b.count));
      lr = s.optimizer.step(s.net, b.grads, s.epoch, s.batch);
      ++s.batch;
      total.loss += b.loss;
      total.reg += b.reg;
      total.count += b.count;
      total.correct += b.correct;
      total.hidden_spikes += b.hidden_spikes;
      total.guard_activations += b.guard_activations;
      total.silent_trials += b.silent_trials;
    }
    std::vector<MetricsRecord> recs;
    recs.push_back(record_from(total, s.epoch, "train", seconds_since(t0)));
    recs.back().weight_lr = lr.weight_lr;
    recs.back().delay_lr = lr.delay_lr;
    if (data.valid) {
      recs.push_back(evaluate(s.net, *data.valid, loss, cfg.timing, cfg.workers));
      recs.back().split = "valid";
    }
    if (data.test) {
      recs.push_back(evaluate(s.net, *data.test, loss, cfg.timing, cfg.workers));
      recs.back().split = "test";
    }
    for (auto& r : recs) {
      r.epoch = s.epoch;
      r.weight_lr = lr.weight_lr;
      r.delay_lr = lr.delay_lr;
      jsonl << r.to_json().dump() << '\n';
      csv << r.epoch << ',' << r.split << ',' << r.loss << ',' << r.reg << ',' << r.accuracy << ','
          << r.mean_hidden_spikes << ',' << r.guard_activations << ',' << r.silent_trials << ',' << r.wall_time << ','
          << r.weight_lr << ',' << r.delay_lr << '\n';
      if (!hooks.quiet)
        std::cerr << "epoch " << r.epoch << ' ' << r.split << " loss " << r.loss << " acc " << r.accuracy << '\n';
    }
    jsonl.flush();
    csv.flush();
    summary.records.insert(summary.records.end(), recs.begin(), recs.end());

    const double metric = cfg.stop_metric == StopMetric::kValidAccuracy ? recs[1].accuracy
                          : data.valid && cfg.stop_metric == StopMetric::kNone ? recs[1].accuracy
                                                                                : recs[0].accuracy;
    if (metric > s.best_metric) {
      s.best_metric = metric;
      s.best_epoch = s.epoch;
      s.stale = 0;
      s.best = s.net;
      save_network(s.best, best_path);
    } else {
      ++s.stale;
    }
    ++s.epoch;
    save_checkpoint(checkpoint_path, s);

    bool stop = cfg.stop_metric != StopMetric::kNone && s.stale > cfg.patience;
    if (cfg.stop_metric != StopMetric::kNone && cfg.patience == 0 && s.stale > 0) stop = true;
    if (hooks.on_epoch && !hooks.on_epoch(recs)) stop = true;
    if (stop) {
      summary.stopped_early = s.epoch < cfg.epochs;
      break;
    }
  }

  summary.epochs_run = s.epoch;
  summary.best_epoch = s.best_epoch;
  summary.best_metric = s.best_metric;
  summary.final_network = s.net;
  summary.best_network = s.best;
  if (!summary.records.empty()) {
    for (auto it = summary.records.rbegin(); it != summary.records.rend(); ++it)
      if (it->split == "train") {
        summary.final_train_accuracy = it->accuracy;
        break;
      }
  }
  if (data.test) summary.test_accuracy = evaluate(s.best, *data.test, loss, cfg.timing, cfg.workers).accuracy;

  if (cfg.dump_traces && !data.train.trials.empty()) {
    const SimPlan plan = make_plan(s.net, cfg.timing);
    ForwardOptions opts;
    opts.record_states = true;
    const ForwardTrace trace = run_trial_forward(plan, data.train.trials.front(), opts);
    write_state_csv(trace, (out_dir / "trace_states.csv").string());
    write_spike_csv(trace, (out_dir / "trace_spikes.csv").string());
  }
  return summary;
}

}  // namespace delayprop
