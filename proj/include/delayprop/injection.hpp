#pragma once

#include <cstdint>
#include <vector>

namespace delayprop {

// Instantaneous change of lam_V of one neuron at grid step `step`.
struct Kick {
  std::uint32_t neuron = 0;  // state index
  std::uint32_t step = 0;
  double amount = 0.0;
};

// Everything a loss feeds into the backward pass.
struct InjectionSchedule {
  std::vector<Kick> kicks;
  std::vector<double> spike_lp;  // dl_p/dt per trace spike (empty = all zero)
  std::vector<double> forcing;   // constant dl_V/dV per state index (empty = zero)

  void scale(double c) {
    for (auto& k : kicks) k.amount *= c;
    for (auto& v : spike_lp) v *= c;
    for (auto& v : forcing) v *= c;
  }
};

}  // namespace delayprop
