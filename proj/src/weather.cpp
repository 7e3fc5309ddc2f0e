#include "flexgrid/weather.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "flexgrid/rng.hpp"

namespace flexgrid {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kColdestMinute = 6 * 60;   // 06:00
constexpr int kWarmestMinute = 15 * 60;  // 15:00

// Asymmetric diurnal wave: a 9 h cosine ramp up from the 06:00 minimum to the
// 15:00 maximum, then a 15 h cosine ramp back down. Both halves join with zero
// slope, so the curve is smooth and its extremes land exactly on the hour.
double diurnal(double minute_of_day, double mid, double amp) {
  if (minute_of_day >= kColdestMinute && minute_of_day < kWarmestMinute) {
    const double phase = (minute_of_day - kColdestMinute) / double(kWarmestMinute - kColdestMinute);
    return mid - amp * std::cos(kPi * phase);
  }
  const double fall_len = kMinutesPerDay - (kWarmestMinute - kColdestMinute);  // 900 min
  double m = minute_of_day - kWarmestMinute;
  if (m < 0) m += kMinutesPerDay;
  return mid + amp * std::cos(kPi * m / fall_len);
}

}  // namespace

WeatherTrace make_weather(std::uint64_t seed, int days, int resolution_minutes,
                          const WeatherOptions& opts) {
  if (days < 1) throw ConfigError("make_weather: days must be >= 1");
  if (resolution_minutes <= 0 || 15 % resolution_minutes != 0)
    throw ConfigError("make_weather: resolution must divide 15 minutes");
  if (opts.t_max <= opts.t_min) throw ConfigError("make_weather: t_max must exceed t_min");

  const double mid = 0.5 * (opts.t_min + opts.t_max);
  const double amp = 0.5 * (opts.t_max - opts.t_min);

  // Smooth multi-day noise: three seeded sinusoids with 6..36 h periods.
  Rng rng(substream_seed(seed, "weather"));
  std::array<double, 3> n_amp{}, n_period{}, n_phase{};
  for (int j = 0; j < 3; ++j) {
    n_amp[j] = opts.noise_amplitude * rng.uniform(0.2, 0.4);
    n_period[j] = rng.uniform(360.0, 2160.0);
    n_phase[j] = rng.uniform(0.0, 2.0 * kPi);
  }

  WeatherTrace trace;
  trace.resolution_minutes = resolution_minutes;
  const int n = days * kMinutesPerDay / resolution_minutes;
  trace.samples.resize(n);
  for (int i = 0; i < n; ++i) {
    const double minute = double(i) * resolution_minutes;
    double t = diurnal(std::fmod(minute, double(kMinutesPerDay)), mid, amp);
    if (opts.noise_amplitude > 0.0)
      for (int j = 0; j < 3; ++j)
        t += n_amp[j] * std::sin(2.0 * kPi * minute / n_period[j] + n_phase[j]);
    trace.samples[i] = std::clamp(t, opts.t_min, opts.t_max);
  }
  return trace;
}

}  // namespace flexgrid
