#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "delayprop/errors.hpp"
#include "delayprop/matrix.hpp"

namespace delayprop {

enum class LayerKind {
  kInput,      // prescribed spike sources, no state
  kHiddenLif,  // leaky integrate-and-fire with reset to 0
  kOutputLi,   // leaky integrator readout, never spikes
  kOutputLif,  // spiking readout (first-spike-time losses)
};

const char* to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& name);

struct NeuronParams {
  double tau_m = 20.0;  // ms
  double tau_s = 5.0;   // ms
  double threshold = 1.0;
  bool has_threshold = true;  // false for LI neurons
};

struct Layer {
  std::string name;
  std::size_t size = 0;
  LayerKind kind = LayerKind::kHiddenLif;
  NeuronParams params;

  bool spiking() const { return kind == LayerKind::kHiddenLif || kind == LayerKind::kOutputLif; }
};

// Weights and delays between two layers, indexed (post, pre). Delays are
// continuous "shadow" values in ms; `slots` holds round(d / dt), the grid
// representation used by the clock-driven engine.
struct ConnectionGroup {
  std::size_t pre_layer = 0;
  std::size_t post_layer = 0;
  Matrix weights;
  Matrix delays;
  std::vector<std::int32_t> slots;
  bool trainable_weights = true;
  bool trainable_delays = false;
  std::int32_t max_delay_slots = 0;

  bool recurrent() const { return pre_layer == post_layer; }
  double max_delay(double dt) const { return max_delay_slots * dt; }
};

struct Network {
  std::vector<Layer> layers;
  std::vector<ConnectionGroup> groups;
  double dt = 1.0;        // ms
  double duration = 0.0;  // T, ms
  std::uint64_t seed = 0;

  std::size_t input_layer() const;
  std::size_t output_layer() const;
  std::size_t num_steps() const;
  std::size_t neuron_count() const;
  std::size_t parameter_count() const;
};

// Grid slot for a delay: nearest integer multiple of dt, ties to even.
std::int32_t delay_to_slot(double delay, double dt);

// Recomputes slot counts from the shadow delays without clipping.
void refresh_slots(ConnectionGroup& group, double dt);

// ---------------------------------------------------------------------------
// Network description consumed by build_network.

struct WeightInit {
  enum class Kind { kNormal, kConstant, kExplicit };
  Kind kind = Kind::kNormal;
  double mean = 0.0;
  double sd = 0.0;
  double value = 0.0;
  std::vector<double> values;  // row-major (post, pre)
};

struct DelayInit {
  enum class Kind { kUniform, kConstant, kExplicit };
  Kind kind = Kind::kConstant;
  double lo = 0.0;
  double hi = 0.0;
  double value = 0.0;
  std::vector<double> values;  // row-major (post, pre)
};

struct LayerSpec {
  std::string name;
  std::size_t size = 0;
  LayerKind kind = LayerKind::kHiddenLif;
  NeuronParams params;
};

struct GroupSpec {
  std::string pre;
  std::string post;
  WeightInit weights;
  DelayInit delays;
  bool trainable_weights = true;
  bool trainable_delays = false;
  std::optional<std::int32_t> max_delay_slots;
};

struct NetworkSpec {
  std::vector<LayerSpec> layers;
  std::vector<GroupSpec> groups;
  double dt = 1.0;
  double duration = 0.0;
  std::uint64_t seed = 0;
};

// Headroom added to the largest initial delay when D_max is not given.
inline constexpr std::int32_t kDefaultDelayHeadroomSlots = 50;

// Validates `spec` and draws initial parameters from a generator seeded
// with spec.seed. Throws ConfigError listing every violation found.
Network build_network(const NetworkSpec& spec);

// Empty iff every structural and parameter invariant holds.
std::vector<std::string> validate(const Network& network);

// Checkpoint round trip. The checkpoint is an ordinary network description
// with explicit matrices, so it can be fed back to build_network.
NetworkSpec to_spec(const Network& network);
std::string network_to_json(const Network& network);
NetworkSpec network_spec_from_json(const std::string& text);
Network load_network(const std::filesystem::path& path);
void save_network(const Network& network, const std::filesystem::path& path);

}  // namespace delayprop
