#pragma once

#include <json.hpp>

#include "delayprop/network.hpp"

namespace delayprop {

// JSON mapping for network descriptions. Matrices are flat row-major number
// lists; doubles are written with round-trip precision.
NetworkSpec parse_network_spec(const nlohmann::json& doc);
nlohmann::json spec_to_json(const NetworkSpec& spec);

}  // namespace delayprop
