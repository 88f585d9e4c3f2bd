#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace delayprop {

// Malformed network spec, run config, dataset file or CLI input.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite state in a forward or backward pass, or a diverging loss.
class NumericError : public std::runtime_error {
 public:
  NumericError(const std::string& what, std::size_t step)
      : std::runtime_error(what + " (step " + std::to_string(step) + ")"), step_(step) {}
  std::size_t step() const noexcept { return step_; }

 private:
  std::size_t step_;
};

}  // namespace delayprop
