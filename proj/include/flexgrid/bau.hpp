#pragma once

#include <span>

#include "flexgrid/types.hpp"

namespace flexgrid {

/// Bang-bang comfort policy: heat whenever the room is at or below the user
/// setpoint. The boundary temperature maps to ON.
inline Action bau_policy(const HouseholdState& state, double setpoint) {
  return state.room_temp() > setpoint ? Action::Off : Action::On;
}

inline Action bau_policy(double room_temp, double setpoint) {
  return room_temp > setpoint ? Action::Off : Action::On;
}

/// Energy consumed by one step: u * P * dt, in kWh.
inline double step_cost(Action action, double heater_kw, double dt_minutes) {
  if (dt_minutes <= 0.0) throw ContractViolation("step_cost: dt must be positive");
  return action == Action::On ? heater_kw * dt_minutes / 60.0 : 0.0;
}

/// Instantaneous consumption of the whole portfolio, in kW.
inline double aggregate_power(std::span<const Action> actions, std::span<const double> powers_kw) {
  if (actions.size() != powers_kw.size())
    throw ContractViolation("aggregate_power: actions/powers length mismatch");
  double total = 0.0;
  for (std::size_t h = 0; h < actions.size(); ++h)
    if (actions[h] == Action::On) total += powers_kw[h];
  return total;
}

}  // namespace flexgrid
