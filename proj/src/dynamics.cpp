#include "delayprop/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <boost/math/tools/roots.hpp>

namespace delayprop {

namespace {

bool degenerate(double tau_a, double tau_b) {
  return std::abs(tau_a - tau_b) <= 1e-12 * std::max(tau_a, tau_b);
}

}  // namespace

StepCoeffs forward_coeffs(const NeuronParams& p, double u) {
  StepCoeffs c;
  c.alpha = std::exp(-u / p.tau_m);
  c.beta = std::exp(-u / p.tau_s);
  if (degenerate(p.tau_m, p.tau_s))
    c.gamma = (u / p.tau_m) * c.alpha;
  else
    c.gamma = p.tau_s / (p.tau_s - p.tau_m) * (c.beta - c.alpha);
  return c;
}

NeuronState step_state(NeuronState s, const NeuronParams& p, double u) {
  return apply(forward_coeffs(p, u), s);
}

double voltage_integral(NeuronState s, const NeuronParams& p, double u) {
  const double alpha = std::exp(-u / p.tau_m);
  const double from_v = s.v * p.tau_m * (1.0 - alpha);
  if (degenerate(p.tau_m, p.tau_s)) {
    const double tau = p.tau_m;
    return from_v + s.i * tau * (1.0 - (1.0 + u / tau) * alpha);
  }
  const double beta = std::exp(-u / p.tau_s);
  const double k = p.tau_s / (p.tau_s - p.tau_m);
  return from_v + s.i * k * (p.tau_s * (1.0 - beta) - p.tau_m * (1.0 - alpha));
}

AdjointCoeffs adjoint_coeffs(const NeuronParams& p, double u) {
  AdjointCoeffs k;
  k.a = std::exp(-u / p.tau_m);
  k.b = std::exp(-u / p.tau_s);
  if (degenerate(p.tau_m, p.tau_s))
    k.c = (u / p.tau_s) * k.b;
  else
    k.c = p.tau_m / (p.tau_m - p.tau_s) * (k.a - k.b);
  return k;
}

AdjointState adjoint_step(AdjointState s, const NeuronParams& p, double lv_grad, double u) {
  return apply(adjoint_coeffs(p, u), s, lv_grad);
}

std::optional<double> find_crossing(NeuronState s, const NeuronParams& p, double horizon) {
  const double theta = p.threshold;
  if (s.v >= theta) return 0.0;
  if (!(horizon > 0.0)) return std::nullopt;

  const NeuronState end = step_state(s, p, horizon);
  const double d0 = vdot(s, p);
  const double d1 = vdot(end, p);

  // Location of the single extremum, clamped to the interval.
  auto extremum = [&]() {
    double u;
    if (degenerate(p.tau_m, p.tau_s)) {
      u = p.tau_m * (s.i - s.v) / s.i;
    } else {
      const double k = p.tau_s / (p.tau_s - p.tau_m);
      const double a = s.v - k * s.i;
      const double b = k * s.i;
      const double ratio = -(b * p.tau_m) / (a * p.tau_s);
      u = std::log(ratio) / (1.0 / p.tau_s - 1.0 / p.tau_m);
    }
    if (!std::isfinite(u)) u = 0.5 * horizon;
    return std::clamp(u, 0.0, horizon);
  };

  double lo = 0.0;
  double hi = horizon;
  if (d0 > 0.0 && d1 < 0.0) {
    const double peak = extremum();
    if (step_state(s, p, peak).v < theta) return std::nullopt;
    hi = peak;
  } else if (end.v < theta) {
    return std::nullopt;
  } else if (d0 < 0.0 && d1 > 0.0) {
    lo = extremum();
  }

  auto f = [&](double u) {
    const NeuronState x = step_state(s, p, u);
    return std::make_pair(x.v - theta, vdot(x, p));
  };
  const double f_lo = f(lo).first;
  const double f_hi = f(hi).first;
  if (f_hi <= 0.0) return hi;
  double guess = lo + (hi - lo) * (-f_lo) / (f_hi - f_lo);
  if (!(guess > lo && guess < hi)) guess = 0.5 * (lo + hi);
  std::uintmax_t iters = 200;
  const double root = boost::math::tools::newton_raphson_iterate(
      f, guess, lo, hi, std::numeric_limits<double>::digits - 2, iters);
  return std::clamp(root, lo, hi);
}

}  // namespace delayprop
