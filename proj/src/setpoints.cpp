#include "flexgrid/setpoints.hpp"

#include <algorithm>

#include "flexgrid/rng.hpp"

namespace flexgrid {

SetpointSchedule make_setpoints(SetpointProfile profile, double base, std::uint64_t seed,
                                const SetpointOptions& opts) {
  if (base < 15.0 || base > 25.0)
    throw ConfigError("make_setpoints: base setpoint must lie in [15, 25] degC");
  if (profile == SetpointProfile::Flat) return SetpointSchedule({{0, base}});

  int start = opts.step_start_minute;
  int end = opts.step_end_minute;
  if (opts.jitter_minutes > 0) {
    Rng rng(substream_seed(seed, "setpoints"));
    start += static_cast<int>(rng.uniform_int(-opts.jitter_minutes, opts.jitter_minutes));
    end += static_cast<int>(rng.uniform_int(-opts.jitter_minutes, opts.jitter_minutes));
  }
  start = std::clamp(start, 1, kMinutesPerDay - 2);
  end = std::clamp(end, start + 1, kMinutesPerDay - 1);
  return SetpointSchedule({{0, base}, {start, base + opts.step_offset}, {end, base}});
}

}  // namespace flexgrid
