#pragma once

#include <optional>

#include "delayprop/network.hpp"

namespace delayprop {

struct NeuronState {
  double v = 0.0;
  double i = 0.0;
};

struct AdjointState {
  double lam_v = 0.0;
  double lam_i = 0.0;
};

// Exact flow of  tau_m V' = -V + I,  tau_s I' = -I  over an interval u:
//   V <- alpha V + gamma I,  I <- beta I.
struct StepCoeffs {
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 0.0;
};

StepCoeffs forward_coeffs(const NeuronParams& p, double u);

inline NeuronState apply(const StepCoeffs& c, NeuronState s) {
  return {c.alpha * s.v + c.gamma * s.i, c.beta * s.i};
}

NeuronState step_state(NeuronState s, const NeuronParams& p, double u);

// Integral of V over [0, u] along the free flow started at s.
double voltage_integral(NeuronState s, const NeuronParams& p, double u);

inline double vdot(NeuronState s, const NeuronParams& p) { return (s.i - s.v) / p.tau_m; }

// Backward-time flow of
//   tau_m lam_V' = -lam_V - g,  tau_s lam_I' = -lam_I + lam_V
// with constant forcing g over an interval u:
//   lam_V <- (lam_V + g) a - g
//   lam_I <- lam_I b + (lam_V + g) c - g (1 - b)
struct AdjointCoeffs {
  double a = 1.0;
  double b = 1.0;
  double c = 0.0;
};

AdjointCoeffs adjoint_coeffs(const NeuronParams& p, double u);

inline AdjointState apply(const AdjointCoeffs& k, AdjointState s, double g) {
  const double shifted = s.lam_v + g;
  return {shifted * k.a - g, s.lam_i * k.b + shifted * k.c - g * (1.0 - k.b)};
}

AdjointState adjoint_step(AdjointState s, const NeuronParams& p, double lv_grad, double u);

// First u in (0, horizon] with V(u) >= threshold along the free flow, if any.
// V is a sum of two exponentials, so it has at most one extremum and the
// crossing can be bracketed exactly before polishing the root.
std::optional<double> find_crossing(NeuronState s, const NeuronParams& p, double horizon);

}  // namespace delayprop
