#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "delayprop/bench_delays.hpp"
#include "delayprop/errors.hpp"
#include "delayprop/gradcheck.hpp"
#include "delayprop/trainer.hpp"

using namespace delayprop;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitGradcheck = 3;

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::string out;
  bool dump_traces = false;
  bool resume = false;
  bool verbose = false;
};

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.workers) cfg.workers = *a.workers;
  if (!a.out.empty()) cfg.out_dir = a.out;
  cfg.dump_traces = cfg.dump_traces || a.dump_traces;
  TrainHooks hooks;
  hooks.quiet = !a.verbose;
  const TrainSummary s = train(cfg, a.resume, hooks);
  nlohmann::json j = {{"out", resolve_out_dir(cfg).string()},
                      {"seed", cfg.seed},
                      {"epochs_run", s.epochs_run},
                      {"best_epoch", s.best_epoch},
                      {"best_metric", s.best_metric},
                      {"stopped_early", s.stopped_early}};
  if (s.final_train_accuracy) j["final_train_accuracy"] = *s.final_train_accuracy;
  if (s.test_accuracy) j["test_accuracy"] = *s.test_accuracy;
  std::cout << j.dump() << '\n';
  return 0;
}

struct EvalArgs {
  std::string config;
  std::string network;
  std::string data;
  std::string split = "test";
  std::string loss = "max_voltage_ce";
  std::string timing = "grid";
  double delta_t = 0.5;
  int workers = 0;
};

int cmd_eval(const EvalArgs& a) {
  std::optional<Network> net;
  if (!a.network.empty()) net = load_network(a.network);
  std::optional<SpikeDataset> data;
  if (!a.data.empty()) data = load_events(a.data);
  LossSpec loss;
  TimingMode mode = timing_mode_from_string(a.timing);
  if (!a.config.empty()) {
    const RunConfig cfg = load_run_config(a.config);
    if (!net) net = build_network(cfg.network);
    loss = resolve_loss(cfg, *net);
    mode = cfg.timing;
    if (!data) {
      DataSplits splits = load_data(cfg);
      if (a.split == "train") data = std::move(splits.train);
      else if (a.split == "valid") data = std::move(splits.valid);
      else if (a.split == "test") data = std::move(splits.test);
      else throw ConfigError("unknown split '" + a.split + "'");
      if (!data) throw ConfigError("config has no " + a.split + " split");
    }
  } else {
    loss.kind = loss_kind_from_string(a.loss);
    loss.delta_t = a.delta_t;
  }
  if (!net) throw ConfigError("eval needs --network or --config");
  if (!data) throw ConfigError("eval needs --data or --config");
  MetricsRecord r = evaluate(*net, *data, loss, mode, a.workers);
  r.split = a.split;
  std::cout << r.to_json().dump() << '\n';
  return 0;
}

struct GradcheckArgs {
  std::string network;
  std::string data;
  std::string loss = "max_voltage_ce";
  double delta_t = 0.5;
  std::string timing = "exact";
  std::uint64_t seed = 0;
  std::size_t trials = 2;
  std::size_t events = 8;
  bool recurrent = false;
  std::string csv;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  Network net;
  if (!a.network.empty()) {
    net = load_network(a.network);
  } else {
    RandomNetConfig rc;
    rc.recurrent = a.recurrent;
    rc.weight_mean = 1.5;
    rc.weight_sd = 0.8;
    net = random_network(rc, a.seed);
  }
  std::vector<TrialInput> trials;
  if (!a.data.empty()) {
    trials = load_events(a.data).trials;
  } else {
    const auto& in = net.layers[net.input_layer()];
    const auto& out = net.layers[net.output_layer()];
    trials = random_trials(in.size, out.size, a.trials, a.events, net.duration * 0.5, a.seed + 1000);
  }
  LossSpec loss;
  loss.kind = loss_kind_from_string(a.loss);
  loss.delta_t = a.delta_t;
  const GradCheckReport report = check_all(net, trials, loss, {}, timing_mode_from_string(a.timing));
  if (!a.csv.empty()) write_report_csv(report, a.csv);
  std::cout << report.verdict() << '\n';
  return report.pass ? 0 : kExitGradcheck;
}

struct BenchArgs {
  BenchDelaysConfig cfg;
  std::string csv;
};

int cmd_bench(const BenchArgs& a) {
  const auto rows = bench_delays(a.cfg);
  if (a.csv.empty()) {
    write_bench_csv(rows, std::cout);
  } else {
    std::ofstream out(a.csv);
    if (!out) throw ConfigError("cannot write " + a.csv);
    write_bench_csv(rows, out);
  }
  return 0;
}

struct GenArgs {
  std::string out;
  std::uint64_t seed = 0;
  std::size_t n = 5000;
  std::vector<std::size_t> split;
  double gap = 10.0;
  YinYangConfig yinyang;
  SyntheticConfig synthetic;
};

void write_dataset(const SpikeDataset& ds, const GenArgs& a) {
  if (a.split.empty()) {
    save_events(ds, a.out);
    return;
  }
  const auto parts = split(ds, a.split);
  const std::filesystem::path base(a.out);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto path = base;
    path.replace_extension("." + std::to_string(k) + base.extension().string());
    save_events(parts[k], path);
    std::cout << path.string() << ' ' << parts[k].trials.size() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Event-based training of spiking networks with learnable synaptic delays"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train from a run config");
  train_cmd->add_option("--config", train_args.config, "Run config (JSON)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--seed", train_args.seed, "Override the run seed");
  train_cmd->add_option("--workers", train_args.workers, "Trial-parallel worker threads");
  train_cmd->add_option("--out", train_args.out, "Output directory (default $DELAYPROP_OUT/<name> or runs/<name>)");
  train_cmd->add_flag("--dump-traces", train_args.dump_traces, "Write state/spike traces of the first training trial");
  train_cmd->add_flag("--resume", train_args.resume, "Continue from checkpoint.json in the output directory");
  train_cmd->add_flag("-v,--verbose", train_args.verbose, "Per-epoch progress on stderr");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a network on a dataset");
  eval_cmd->add_option("--config", eval_args.config, "Run config providing network, loss and data");
  eval_cmd->add_option("--network", eval_args.network, "Network/checkpoint file (JSON)");
  eval_cmd->add_option("--data", eval_args.data, "Event file");
  eval_cmd->add_option("--split", eval_args.split, "Split of the config's data: train, valid or test");
  eval_cmd->add_option("--loss", eval_args.loss, "Loss when no config is given");
  eval_cmd->add_option("--delta-t", eval_args.delta_t, "Target spike-time gap for delta_mse");
  eval_cmd->add_option("--timing", eval_args.timing, "grid or exact");
  eval_cmd->add_option("--workers", eval_args.workers, "Worker threads");

  GradcheckArgs gc_args;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare adjoint gradients with finite differences");
  gc_cmd->add_option("--network", gc_args.network, "Network file; a random one is drawn otherwise");
  gc_cmd->add_option("--data", gc_args.data, "Event file; random trials otherwise");
  gc_cmd->add_option("--loss", gc_args.loss, "delta_mse, max_voltage_ce or avg_voltage_ce");
  gc_cmd->add_option("--delta-t", gc_args.delta_t, "Target spike-time gap for delta_mse");
  gc_cmd->add_option("--timing", gc_args.timing, "grid or exact");
  gc_cmd->add_option("--seed", gc_args.seed, "Seed for the random network and trials");
  gc_cmd->add_option("--trials", gc_args.trials, "Random trials");
  gc_cmd->add_option("--events", gc_args.events, "Input events per random trial");
  gc_cmd->add_flag("--recurrent", gc_args.recurrent, "Random network with a recurrent hidden layer");
  gc_cmd->add_option("--csv", gc_args.csv, "Per-coordinate report");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench-delays", "Memory and time versus maximum delay");
  bench_cmd->add_option("--d-max", bench_args.cfg.d_max, "Maximum delay slots to sweep");
  bench_cmd->add_option("--hidden", bench_args.cfg.hidden, "Hidden layer sizes");
  bench_cmd->add_option("--trials", bench_args.cfg.trials, "Trials per epoch");
  bench_cmd->add_option("--repeats", bench_args.cfg.repeats, "Timed epochs per point");
  bench_cmd->add_option("--workers", bench_args.cfg.workers, "Worker threads");
  bench_cmd->add_option("--seed", bench_args.cfg.seed, "Network and data seed");
  bench_cmd->add_option("--out", bench_args.csv, "CSV path (stdout otherwise)");

  GenArgs gen_args;
  auto* gen_cmd = app.add_subcommand("gen", "Write a generated dataset as an event file");
  gen_cmd->require_subcommand(1);
  auto add_common = [&](CLI::App* c) {
    c->add_option("--out", gen_args.out, "Event file")->required();
    c->add_option("--split", gen_args.split, "Write consecutive parts of these sizes to <out>.<k>.<ext>");
  };
  auto* gen_yy = gen_cmd->add_subcommand("yinyang", "Temporally coded Yin-Yang points");
  add_common(gen_yy);
  gen_yy->add_option("--n", gen_args.n, "Number of samples");
  gen_yy->add_option("--seed", gen_args.seed, "Sampling seed");
  gen_yy->add_option("--dt", gen_args.yinyang.dt, "Time step (ms)");
  auto* gen_seq = gen_cmd->add_subcommand("sequence", "The two-trial sequence detection task");
  add_common(gen_seq);
  gen_seq->add_option("--gap", gen_args.gap, "Time between the two input spikes (ms)");
  auto* gen_syn = gen_cmd->add_subcommand("synthetic", "Class-dependent channel-group sequences");
  add_common(gen_syn);
  gen_syn->add_option("--seed", gen_args.seed, "Sampling seed");
  gen_syn->add_option("--trials", gen_args.synthetic.n_trials, "Number of trials");
  gen_syn->add_option("--classes", gen_args.synthetic.n_classes, "Number of classes");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(train_args);
    if (*eval_cmd) return cmd_eval(eval_args);
    if (*gc_cmd) return cmd_gradcheck(gc_args);
    if (*bench_cmd) return cmd_bench(bench_args);
    if (*gen_yy) write_dataset(gen_yinyang(gen_args.n, gen_args.seed, gen_args.yinyang), gen_args);
    if (*gen_seq) write_dataset(gen_sequence_task(gen_args.gap), gen_args);
    if (*gen_syn) write_dataset(gen_synthetic(gen_args.synthetic, gen_args.seed), gen_args);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
}
