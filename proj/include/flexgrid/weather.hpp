#pragma once

#include <cstdint>
#include <vector>

#include "flexgrid/errors.hpp"
#include "flexgrid/types.hpp"

namespace flexgrid {

/// Outdoor temperature trace sampled on a fixed sub-quarter-hour grid.
struct WeatherTrace {
  std::int64_t start_minute = 0;
  int resolution_minutes = 15;  // must divide 15
  std::vector<double> samples;  // degC per step

  /// Piecewise-constant lookup by absolute minute.
  double at_minute(std::int64_t minute) const {
    const std::int64_t idx = (minute - start_minute) / resolution_minutes;
    if (idx < 0 || idx >= static_cast<std::int64_t>(samples.size()))
      throw ConfigError("WeatherTrace: minute outside trace horizon");
    return samples[static_cast<std::size_t>(idx)];
  }

  bool covers(std::int64_t minutes) const {
    return static_cast<std::int64_t>(samples.size()) * resolution_minutes >= minutes;
  }
};

struct WeatherOptions {
  double t_min = -5.0;
  double t_max = 10.0;
  double noise_amplitude = 1.0;  // degC; 0 gives the pure diurnal shape
};

/// Synthetic winter weather: an asymmetric diurnal wave (coldest at 06:00,
/// warmest at 15:00) plus smooth seeded noise, clamped to [t_min, t_max].
/// Deterministic for a fixed seed.
WeatherTrace make_weather(std::uint64_t seed, int days, int resolution_minutes,
                          const WeatherOptions& opts = {});

}  // namespace flexgrid
