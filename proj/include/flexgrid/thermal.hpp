#pragma once

#include <cmath>

#include "flexgrid/errors.hpp"
#include "flexgrid/setpoints.hpp"
#include "flexgrid/types.hpp"

namespace flexgrid {

/// Lumped 1R1C description of one dwelling. COP is fixed at 1, so the rated
/// electrical power equals the thermal input.
struct ThermalParams {
  int id = 0;
  double resistance_k_per_kw = 4.0;   // R
  double capacitance_kwh_per_k = 8.0; // C
  double heater_kw = 2.0;             // P

  /// Steady-state room temperature with the heater latched ON.
  double equilibrium_on(double outdoor_temp) const {
    return outdoor_temp + resistance_k_per_kw * heater_kw;
  }

  /// Valid iff all constants are positive and the heater can hold
  /// max_setpoint + 1 degC at the design outdoor temperature; without that
  /// margin the comfort guarantee is unachievable.
  void validate(double design_outdoor_temp, double max_setpoint) const {
    if (resistance_k_per_kw <= 0.0 || capacitance_kwh_per_k <= 0.0 || heater_kw <= 0.0)
      throw ConfigError("ThermalParams: R, C and P must be strictly positive");
    if (equilibrium_on(design_outdoor_temp) <= max_setpoint + 1.0)
      throw ConfigError("ThermalParams: heater undersized for the comfort band at design conditions");
  }
};

/// Forward-Euler step of the 1R1C model over dt minutes:
///   T' = T + (dt/60)/C * ((T_o - T)/R + u*P) + noise
/// `noise` is an externally drawn temperature disturbance so the update itself
/// stays a pure function.
inline double step_room_temp(const ThermalParams& p, double room_temp, double outdoor_temp,
                             Action action, double dt_minutes, double noise = 0.0) {
  if (!std::isfinite(room_temp) || !std::isfinite(outdoor_temp))
    throw SimError("step_room_temp: non-finite temperature input");
  if (dt_minutes != 1.0 && dt_minutes != 15.0)
    throw ContractViolation("step_room_temp: dt must be 1 or 15 minutes");
  const double dt_hours = dt_minutes / 60.0;
  const double heat_kw = (action == Action::On) ? p.heater_kw : 0.0;
  const double drift = (outdoor_temp - room_temp) / p.resistance_k_per_kw + heat_kw;
  return room_temp + dt_hours / p.capacitance_kwh_per_k * drift + noise;
}

/// Simulated dwelling: physics, live room temperature and the user schedule.
/// The temperature is only ever advanced through step_house.
struct HouseSim {
  ThermalParams params;
  double room_temp = 20.0;
  SetpointSchedule schedule;
};

inline double step_house(HouseSim& sim, double outdoor_temp, Action action, double dt_minutes,
                         double noise = 0.0) {
  sim.room_temp = step_room_temp(sim.params, sim.room_temp, outdoor_temp, action, dt_minutes, noise);
  if (!std::isfinite(sim.room_temp)) throw SimError("step_house: simulation diverged");
  return sim.room_temp;
}

}  // namespace flexgrid
