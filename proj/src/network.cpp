#include "delayprop/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "delayprop/json_io.hpp"

namespace delayprop {

using nlohmann::json;

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kInput: return "input";
    case LayerKind::kHiddenLif: return "hidden-lif";
    case LayerKind::kOutputLi: return "output-li";
    case LayerKind::kOutputLif: return "output-lif";
  }
  return "?";
}

LayerKind layer_kind_from_string(const std::string& name) {
  if (name == "input") return LayerKind::kInput;
  if (name == "hidden-lif") return LayerKind::kHiddenLif;
  if (name == "output-li") return LayerKind::kOutputLi;
  if (name == "output-lif") return LayerKind::kOutputLif;
  throw ConfigError("unknown layer kind '" + name + "'");
}

namespace {

bool is_output(LayerKind kind) {
  return kind == LayerKind::kOutputLi || kind == LayerKind::kOutputLif;
}

std::size_t find_unique(const std::vector<Layer>& layers, bool (*pred)(LayerKind),
                        const char* what) {
  std::size_t found = layers.size();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (pred(layers[l].kind)) {
      if (found != layers.size()) throw ConfigError(std::string("more than one ") + what + " layer");
      found = l;
    }
  }
  if (found == layers.size()) throw ConfigError(std::string("no ") + what + " layer");
  return found;
}

}  // namespace

std::size_t Network::input_layer() const {
  return find_unique(layers, [](LayerKind k) { return k == LayerKind::kInput; }, "input");
}

std::size_t Network::output_layer() const { return find_unique(layers, is_output, "output"); }

std::size_t Network::num_steps() const {
  return static_cast<std::size_t>(std::llround(duration / dt));
}

std::size_t Network::neuron_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.size;
  return n;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& g : groups) {
    if (g.trainable_weights) n += g.weights.size();
    if (g.trainable_delays) n += g.delays.size();
  }
  return n;
}

std::int32_t delay_to_slot(double delay, double dt) {
  return static_cast<std::int32_t>(std::nearbyint(delay / dt));
}

void refresh_slots(ConnectionGroup& group, double dt) {
  group.slots.resize(group.delays.size());
  for (std::size_t k = 0; k < group.delays.size(); ++k)
    group.slots[k] = delay_to_slot(group.delays[k], dt);
}

namespace {

void check_params(const std::string& where, const LayerSpec& layer,
                  std::vector<std::string>& errors) {
  if (layer.kind == LayerKind::kInput) return;
  const auto& p = layer.params;
  if (!(p.tau_m > 0.0) || !std::isfinite(p.tau_m))
    errors.push_back(where + ": tau_m must be > 0");
  if (!(p.tau_s > 0.0) || !std::isfinite(p.tau_s))
    errors.push_back(where + ": tau_s must be > 0");
  const bool spiking = layer.kind == LayerKind::kHiddenLif || layer.kind == LayerKind::kOutputLif;
  if (spiking && (!(p.threshold > 0.0) || !std::isfinite(p.threshold)))
    errors.push_back(where + ": LIF threshold must be finite and > 0");
}

bool duration_on_grid(double duration, double dt) {
  if (!(dt > 0.0) || !(duration > 0.0)) return false;
  const double steps = duration / dt;
  return std::abs(steps - std::round(steps)) <= 1e-9 * std::max(1.0, steps);
}

}  // namespace

Network build_network(const NetworkSpec& spec) {
  std::vector<std::string> errors;
  Network net;
  net.dt = spec.dt;
  net.duration = spec.duration;
  net.seed = spec.seed;

  if (!duration_on_grid(spec.duration, spec.dt))
    errors.push_back("dt must be > 0 and duration a positive integer multiple of dt");

  std::map<std::string, std::size_t> index;
  std::size_t inputs = 0, outputs = 0;
  for (const auto& ls : spec.layers) {
    const std::string where = "layer '" + ls.name + "'";
    if (ls.size == 0) errors.push_back(where + ": size must be > 0");
    if (!index.emplace(ls.name, net.layers.size()).second)
      errors.push_back(where + ": duplicate name");
    check_params(where, ls, errors);
    if (ls.kind == LayerKind::kInput) ++inputs;
    if (is_output(ls.kind)) ++outputs;
    Layer layer{ls.name, ls.size, ls.kind, ls.params};
    if (ls.kind == LayerKind::kOutputLi || ls.kind == LayerKind::kInput)
      layer.params.has_threshold = false;
    else
      layer.params.has_threshold = true;
    net.layers.push_back(layer);
  }
  if (inputs != 1) errors.push_back("exactly one input layer required");
  if (outputs != 1) errors.push_back("exactly one output layer required");

  std::mt19937_64 rng(spec.seed);
  for (std::size_t gi = 0; gi < spec.groups.size(); ++gi) {
    const auto& gs = spec.groups[gi];
    const std::string where = "connection " + std::to_string(gi) + " (" + gs.pre + "->" + gs.post + ")";
    auto pre = index.find(gs.pre);
    auto post = index.find(gs.post);
    if (pre == index.end() || post == index.end()) {
      errors.push_back(where + ": references unknown layer");
      continue;
    }
    if (net.layers[post->second].kind == LayerKind::kInput) {
      errors.push_back(where + ": input layer cannot be a target");
      continue;
    }
    ConnectionGroup g;
    g.pre_layer = pre->second;
    g.post_layer = post->second;
    g.trainable_weights = gs.trainable_weights;
    g.trainable_delays = gs.trainable_delays;
    const std::size_t rows = net.layers[g.post_layer].size;
    const std::size_t cols = net.layers[g.pre_layer].size;
    const std::size_t count = rows * cols;
    g.weights = Matrix(rows, cols);
    g.delays = Matrix(rows, cols);

    switch (gs.weights.kind) {
      case WeightInit::Kind::kNormal: {
        if (!(gs.weights.sd >= 0.0)) errors.push_back(where + ": weight sd must be >= 0");
        std::normal_distribution<double> dist(gs.weights.mean, std::max(gs.weights.sd, 0.0));
        for (std::size_t k = 0; k < count; ++k) g.weights[k] = gs.weights.sd > 0.0 ? dist(rng) : gs.weights.mean;
        break;
      }
      case WeightInit::Kind::kConstant:
        g.weights.fill(gs.weights.value);
        break;
      case WeightInit::Kind::kExplicit:
        if (gs.weights.values.size() != count) {
          errors.push_back(where + ": expected " + std::to_string(count) + " weights");
        } else {
          std::copy(gs.weights.values.begin(), gs.weights.values.end(), g.weights.flat().begin());
        }
        break;
    }

    double init_max = 0.0;
    switch (gs.delays.kind) {
      case DelayInit::Kind::kUniform: {
        if (gs.delays.lo < 0.0 || gs.delays.hi < gs.delays.lo)
          errors.push_back(where + ": uniform delay bounds must satisfy 0 <= lo <= hi");
        std::uniform_real_distribution<double> dist(gs.delays.lo, std::max(gs.delays.lo, gs.delays.hi));
        for (std::size_t k = 0; k < count; ++k)
          g.delays[k] = gs.delays.hi > gs.delays.lo ? dist(rng) : gs.delays.lo;
        init_max = gs.delays.hi;
        break;
      }
      case DelayInit::Kind::kConstant:
        if (gs.delays.value < 0.0) errors.push_back(where + ": delay must be >= 0");
        g.delays.fill(gs.delays.value);
        init_max = gs.delays.value;
        break;
      case DelayInit::Kind::kExplicit:
        if (gs.delays.values.size() != count) {
          errors.push_back(where + ": expected " + std::to_string(count) + " delays");
        } else {
          std::copy(gs.delays.values.begin(), gs.delays.values.end(), g.delays.flat().begin());
          for (double d : gs.delays.values) {
            if (d < 0.0 || !std::isfinite(d)) errors.push_back(where + ": delay entries must be finite and >= 0");
            init_max = std::max(init_max, d);
          }
        }
        break;
    }

    if (gs.max_delay_slots) {
      g.max_delay_slots = *gs.max_delay_slots;
      if (g.max_delay_slots < 0) errors.push_back(where + ": max_delay_slots must be >= 0");
    } else if (spec.dt > 0.0) {
      g.max_delay_slots = static_cast<std::int32_t>(std::ceil(init_max / spec.dt - 1e-9)) +
                          kDefaultDelayHeadroomSlots;
    }
    if (spec.dt > 0.0 && init_max > g.max_delay(spec.dt) * (1.0 + 1e-12))
      errors.push_back(where + ": delay init exceeds max_delay_slots * dt");
    if (spec.dt > 0.0) refresh_slots(g, spec.dt);
    net.groups.push_back(std::move(g));
  }

  if (!errors.empty()) {
    std::ostringstream msg;
    msg << "invalid network spec:";
    for (const auto& e : errors) msg << "\n  " << e;
    throw ConfigError(msg.str());
  }
  return net;
}

std::vector<std::string> validate(const Network& net) {
  std::vector<std::string> v;
  std::size_t inputs = 0, outputs = 0;
  for (const auto& layer : net.layers) {
    if (layer.kind == LayerKind::kInput) ++inputs;
    if (is_output(layer.kind)) ++outputs;
    check_params("layer '" + layer.name + "'", LayerSpec{layer.name, layer.size, layer.kind, layer.params}, v);
  }
  if (inputs != 1) v.push_back("exactly one input layer required");
  if (outputs != 1) v.push_back("exactly one output layer required");
  if (!duration_on_grid(net.duration, net.dt))
    v.push_back("dt must be > 0 and duration a positive integer multiple of dt");

  for (std::size_t gi = 0; gi < net.groups.size(); ++gi) {
    const auto& g = net.groups[gi];
    const std::string where = "connection " + std::to_string(gi);
    if (g.pre_layer >= net.layers.size() || g.post_layer >= net.layers.size()) {
      v.push_back(where + ": references unknown layer");
      continue;
    }
    if (net.layers[g.post_layer].kind == LayerKind::kInput)
      v.push_back(where + ": input layer cannot be a target");
    const std::size_t rows = net.layers[g.post_layer].size;
    const std::size_t cols = net.layers[g.pre_layer].size;
    if (g.weights.rows() != rows || g.weights.cols() != cols || g.delays.rows() != rows ||
        g.delays.cols() != cols || g.slots.size() != rows * cols) {
      v.push_back(where + ": matrix shape mismatch");
      continue;
    }
    if (g.max_delay_slots < 0) v.push_back(where + ": max_delay_slots must be >= 0");
    const double dmax = g.max_delay(net.dt);
    for (std::size_t j = 0; j < rows; ++j) {
      for (std::size_t i = 0; i < cols; ++i) {
        const std::size_t k = j * cols + i;
        const double d = g.delays[k];
        const std::string entry = where + ": delay[" + std::to_string(j) + "][" + std::to_string(i) + "]";
        if (!std::isfinite(g.weights[k]))
          v.push_back(where + ": weight[" + std::to_string(j) + "][" + std::to_string(i) + "] not finite");
        if (!(d >= 0.0) || !(d <= dmax)) {
          std::ostringstream msg;
          msg << entry << " = " << d << " outside [0, " << dmax << "]";
          v.push_back(msg.str());
        } else if (g.slots[k] != delay_to_slot(d, net.dt) || g.slots[k] < 0 ||
                   g.slots[k] > g.max_delay_slots) {
          v.push_back(entry + ": slot count inconsistent with shadow value");
        }
      }
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// JSON

NetworkSpec to_spec(const Network& net) {
  NetworkSpec spec;
  spec.dt = net.dt;
  spec.duration = net.duration;
  spec.seed = net.seed;
  for (const auto& layer : net.layers)
    spec.layers.push_back(LayerSpec{layer.name, layer.size, layer.kind, layer.params});
  for (const auto& g : net.groups) {
    GroupSpec gs;
    gs.pre = net.layers[g.pre_layer].name;
    gs.post = net.layers[g.post_layer].name;
    gs.weights.kind = WeightInit::Kind::kExplicit;
    gs.weights.values.assign(g.weights.flat().begin(), g.weights.flat().end());
    gs.delays.kind = DelayInit::Kind::kExplicit;
    gs.delays.values.assign(g.delays.flat().begin(), g.delays.flat().end());
    gs.trainable_weights = g.trainable_weights;
    gs.trainable_delays = g.trainable_delays;
    gs.max_delay_slots = g.max_delay_slots;
    spec.groups.push_back(std::move(gs));
  }
  return spec;
}

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  auto it = j.find(key);
  return it == j.end() ? fallback : it->get<T>();
}

WeightInit parse_weight_init(const json& j) {
  WeightInit w;
  if (j.is_number()) {
    w.kind = WeightInit::Kind::kConstant;
    w.value = j.get<double>();
    return w;
  }
  const auto init = j.at("init").get<std::string>();
  if (init == "normal") {
    w.kind = WeightInit::Kind::kNormal;
    w.mean = j.at("mean").get<double>();
    w.sd = j.at("sd").get<double>();
  } else if (init == "constant") {
    w.kind = WeightInit::Kind::kConstant;
    w.value = j.at("value").get<double>();
  } else if (init == "explicit") {
    w.kind = WeightInit::Kind::kExplicit;
    w.values = j.at("values").get<std::vector<double>>();
  } else {
    throw ConfigError("unknown weight init '" + init + "'");
  }
  return w;
}

DelayInit parse_delay_init(const json& j) {
  DelayInit d;
  if (j.is_number()) {
    d.kind = DelayInit::Kind::kConstant;
    d.value = j.get<double>();
    return d;
  }
  const auto init = j.at("init").get<std::string>();
  if (init == "uniform") {
    d.kind = DelayInit::Kind::kUniform;
    d.lo = j.at("lo").get<double>();
    d.hi = j.at("hi").get<double>();
  } else if (init == "constant") {
    d.kind = DelayInit::Kind::kConstant;
    d.value = j.at("value").get<double>();
  } else if (init == "explicit") {
    d.kind = DelayInit::Kind::kExplicit;
    d.values = j.at("values").get<std::vector<double>>();
  } else {
    throw ConfigError("unknown delay init '" + init + "'");
  }
  return d;
}

json weight_init_to_json(const WeightInit& w) {
  switch (w.kind) {
    case WeightInit::Kind::kNormal: return {{"init", "normal"}, {"mean", w.mean}, {"sd", w.sd}};
    case WeightInit::Kind::kConstant: return {{"init", "constant"}, {"value", w.value}};
    case WeightInit::Kind::kExplicit: return {{"init", "explicit"}, {"values", w.values}};
  }
  return {};
}

json delay_init_to_json(const DelayInit& d) {
  switch (d.kind) {
    case DelayInit::Kind::kUniform: return {{"init", "uniform"}, {"lo", d.lo}, {"hi", d.hi}};
    case DelayInit::Kind::kConstant: return {{"init", "constant"}, {"value", d.value}};
    case DelayInit::Kind::kExplicit: return {{"init", "explicit"}, {"values", d.values}};
  }
  return {};
}

}  // namespace

NetworkSpec parse_network_spec(const json& doc) {
  try {
    NetworkSpec spec;
    spec.dt = doc.at("dt").get<double>();
    spec.duration = doc.at("duration").get<double>();
    spec.seed = get_or<std::uint64_t>(doc, "seed", 0);
    for (const auto& jl : doc.at("layers")) {
      LayerSpec ls;
      ls.name = jl.at("name").get<std::string>();
      ls.size = jl.at("size").get<std::size_t>();
      ls.kind = layer_kind_from_string(jl.at("kind").get<std::string>());
      ls.params.tau_m = get_or(jl, "tau_m", ls.params.tau_m);
      ls.params.tau_s = get_or(jl, "tau_s", ls.params.tau_s);
      ls.params.threshold = get_or(jl, "threshold", ls.params.threshold);
      spec.layers.push_back(ls);
    }
    for (const auto& jg : doc.at("connections")) {
      GroupSpec gs;
      gs.pre = jg.at("pre").get<std::string>();
      gs.post = jg.at("post").get<std::string>();
      gs.weights = parse_weight_init(jg.at("weights"));
      gs.delays = jg.contains("delays") ? parse_delay_init(jg.at("delays")) : DelayInit{};
      gs.trainable_weights = get_or(jg, "trainable_weights", true);
      gs.trainable_delays = get_or(jg, "trainable_delays", false);
      if (jg.contains("max_delay_slots")) gs.max_delay_slots = jg.at("max_delay_slots").get<std::int32_t>();
      spec.groups.push_back(std::move(gs));
    }
    return spec;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed network description: ") + e.what());
  }
}

json spec_to_json(const NetworkSpec& spec) {
  json doc;
  doc["dt"] = spec.dt;
  doc["duration"] = spec.duration;
  doc["seed"] = spec.seed;
  doc["layers"] = json::array();
  for (const auto& ls : spec.layers) {
    json jl = {{"name", ls.name}, {"size", ls.size}, {"kind", to_string(ls.kind)}};
    if (ls.kind != LayerKind::kInput) {
      jl["tau_m"] = ls.params.tau_m;
      jl["tau_s"] = ls.params.tau_s;
      if (ls.kind != LayerKind::kOutputLi) jl["threshold"] = ls.params.threshold;
    }
    doc["layers"].push_back(jl);
  }
  doc["connections"] = json::array();
  for (const auto& gs : spec.groups) {
    json jg = {{"pre", gs.pre},
               {"post", gs.post},
               {"weights", weight_init_to_json(gs.weights)},
               {"delays", delay_init_to_json(gs.delays)},
               {"trainable_weights", gs.trainable_weights},
               {"trainable_delays", gs.trainable_delays}};
    if (gs.max_delay_slots) jg["max_delay_slots"] = *gs.max_delay_slots;
    doc["connections"].push_back(jg);
  }
  return doc;
}

std::string network_to_json(const Network& net) { return spec_to_json(to_spec(net)).dump(2); }

NetworkSpec network_spec_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("network description is not valid JSON: ") + e.what());
  }
  return parse_network_spec(doc);
}

Network load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open network file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return build_network(network_spec_from_json(buf.str()));
}

void save_network(const Network& net, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write network file " + path.string());
  out << network_to_json(net) << '\n';
}

}  // namespace delayprop
