#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "flexgrid/errors.hpp"

namespace flexgrid {

constexpr int kMinutesPerDay = 1440;
constexpr int kQuarterMinutes = 15;
constexpr int kStepsPerDay = kMinutesPerDay / kQuarterMinutes;  // 96

/// Heater command. The only two actions a household exposes.
enum class Action : int { Off = 0, On = 1 };

inline const char* to_string(Action a) { return a == Action::On ? "ON" : "OFF"; }

inline int to_int(Action a) { return static_cast<int>(a); }

/// Partially observable household state: time of day, outside air temperature
/// and the last k+1 room temperatures (oldest first, last entry is current).
struct HouseholdState {
  int minute_of_day = 0;             // 0..1439
  double outdoor_temp = 0.0;         // degC
  Eigen::VectorXd room_temp_history; // degC, length k+1

  double room_temp() const { return room_temp_history(room_temp_history.size() - 1); }

  int history_order() const { return static_cast<int>(room_temp_history.size()) - 1; }

  bool finite() const {
    return std::isfinite(outdoor_temp) && room_temp_history.allFinite() &&
           minute_of_day >= 0 && minute_of_day < kMinutesPerDay;
  }
};

/// Builds a state whose whole history is one replicated temperature. Used by
/// grid worlds, heatmaps and tests where no real history exists.
inline HouseholdState make_state(int minute_of_day, double outdoor_temp, double room_temp,
                                 int k) {
  HouseholdState s;
  s.minute_of_day = minute_of_day;
  s.outdoor_temp = outdoor_temp;
  s.room_temp_history = Eigen::VectorXd::Constant(k + 1, room_temp);
  return s;
}

/// One logged step of experience. `setpoint` is the user target at the state's
/// time; it rides along for policy evaluation but never enters the Q features.
struct Transition {
  HouseholdState state;
  double setpoint = 20.0;  // degC
  Action action = Action::Off;
  double cost = 0.0;  // kWh consumed during the step
  HouseholdState next_state;
  bool terminal = false;  // true iff next_state starts a new day
};

}  // namespace flexgrid
