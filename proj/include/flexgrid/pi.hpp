#pragma once

#include <algorithm>

#include "flexgrid/errors.hpp"

namespace flexgrid {

/// Discrete PI on the tracking error, output in kW of deviation power,
/// clamped to [0, out_max]. Integration is conditional: the accumulator is
/// rolled back whenever the update would push the output further past an
/// active clamp, and is itself bounded so a long saturation cannot store an
/// unbounded backlog.
struct PIController {
  double kp = 0.6;
  double ki = 0.15;      // per minute
  double out_max = 0.0;  // kW
  double integral = 0.0; // kW * min

  void reset() { integral = 0.0; }
};

inline double pi_update(PIController& c, double error_kw, double dt_minutes) {
  if (dt_minutes <= 0.0) throw ContractViolation("pi_update: dt must be positive");
  double candidate = c.integral + error_kw * dt_minutes;
  if (c.ki > 0.0)
    candidate = std::clamp(candidate, -c.out_max / c.ki, c.out_max / c.ki);
  const double raw = c.kp * error_kw + c.ki * candidate;
  const bool saturating_high = raw > c.out_max && error_kw > 0.0;
  const bool saturating_low = raw < 0.0 && error_kw < 0.0;
  if (!saturating_high && !saturating_low) c.integral = candidate;
  return std::clamp(raw, 0.0, c.out_max);
}

}  // namespace flexgrid
