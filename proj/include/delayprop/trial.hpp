#pragma once

#include <cstdint>
#include <vector>

namespace delayprop {

struct InputEvent {
  std::uint32_t channel = 0;
  double time = 0.0;  // ms

  bool operator==(const InputEvent&) const = default;
};

// Time-sorted input spikes for one trial plus its class label.
struct TrialInput {
  std::vector<InputEvent> events;
  std::int32_t label = 0;

  bool operator==(const TrialInput&) const = default;
};

}  // namespace delayprop
