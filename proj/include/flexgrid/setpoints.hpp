#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "flexgrid/errors.hpp"
#include "flexgrid/types.hpp"

namespace flexgrid {

/// Piecewise-constant daily target temperature. Breakpoints are
/// (minute-of-day, setpoint) pairs, strictly sorted, first one at minute 0,
/// temperatures within [15, 25] degC.
class SetpointSchedule {
 public:
  SetpointSchedule() : breakpoints_{{0, 20.0}} {}

  explicit SetpointSchedule(std::vector<std::pair<int, double>> breakpoints)
      : breakpoints_(std::move(breakpoints)) {
    if (breakpoints_.empty() || breakpoints_.front().first != 0)
      throw ConfigError("SetpointSchedule: first breakpoint must be at minute 0");
    int prev = -1;
    for (const auto& [minute, temp] : breakpoints_) {
      if (minute <= prev || minute >= kMinutesPerDay)
        throw ConfigError("SetpointSchedule: breakpoints must be strictly increasing within a day");
      if (temp < 15.0 || temp > 25.0)
        throw ConfigError("SetpointSchedule: setpoints must lie in [15, 25] degC");
      prev = minute;
    }
  }

  double at(int minute_of_day) const {
    if (minute_of_day < 0 || minute_of_day >= kMinutesPerDay)
      throw ContractViolation("SetpointSchedule: minute outside [0, 1440)");
    double sp = breakpoints_.front().second;
    for (const auto& [minute, temp] : breakpoints_) {
      if (minute > minute_of_day) break;
      sp = temp;
    }
    return sp;
  }

  double min_setpoint() const {
    double lo = breakpoints_.front().second;
    for (const auto& bp : breakpoints_) lo = std::min(lo, bp.second);
    return lo;
  }

  double max_setpoint() const {
    double hi = breakpoints_.front().second;
    for (const auto& bp : breakpoints_) hi = std::max(hi, bp.second);
    return hi;
  }

  const std::vector<std::pair<int, double>>& breakpoints() const { return breakpoints_; }

 private:
  std::vector<std::pair<int, double>> breakpoints_;
};

enum class SetpointProfile { Flat, EveningStep };

struct SetpointOptions {
  double step_offset = 1.5;  // degC added during the evening block
  int step_start_minute = 17 * 60;
  int step_end_minute = 22 * 60;
  int jitter_minutes = 0;  // uniform +- jitter on the step edges, drawn from the seed
};

/// Two user archetypes: a flat target all day, or a flat target with a warmer
/// evening block. With jitter_minutes == 0 the construction is fully
/// deterministic and the seed is unused.
SetpointSchedule make_setpoints(SetpointProfile profile, double base, std::uint64_t seed,
                                const SetpointOptions& opts = {});

}  // namespace flexgrid
