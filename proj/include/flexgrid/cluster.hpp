#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "flexgrid/bau.hpp"
#include "flexgrid/experience.hpp"
#include "flexgrid/rng.hpp"
#include "flexgrid/thermal.hpp"
#include "flexgrid/weather.hpp"

namespace flexgrid {

/// Household control policy: state + current setpoint -> heater command.
using PolicyFn = std::function<Action(const HouseholdState&, double setpoint)>;

inline PolicyFn bau_policy_fn() {
  return [](const HouseholdState& s, double sp) { return bau_policy(s, sp); };
}

struct ClusterOptions {
  int history_order = 4;      // k: room-temperature history depth
  double noise_sigma = 0.0;   // degC per step, temperature disturbance
  std::uint64_t noise_seed = 0;
};

/// One daily episode of logged experience for a single house.
struct Episode {
  int house_id = 0;
  int day = 0;
  std::vector<Transition> steps;
};

/// Owns the live simulation state of a cluster of houses: room temperatures,
/// the 15-minute history rings behind each HouseholdState, the shared clock
/// and the per-house disturbance streams. Houses are mutually independent;
/// all mutation goes through the step methods.
class ClusterSim {
 public:
  ClusterSim(std::vector<HouseSim> houses, const WeatherTrace* weather,
             const ClusterOptions& opts = {});

  int size() const { return static_cast<int>(houses_.size()); }
  std::int64_t minute() const { return minute_; }
  int minute_of_day() const { return static_cast<int>(minute_ % kMinutesPerDay); }
  int day() const { return static_cast<int>(minute_ / kMinutesPerDay); }
  int history_order() const { return opts_.history_order; }

  const HouseSim& house(int h) const { return houses_[h]; }
  const WeatherTrace& weather() const { return *weather_; }
  double outdoor_now() const { return weather_->at_minute(minute_); }
  double setpoint(int h) const { return houses_[h].schedule.at(minute_of_day()); }

  /// Live partially observable state: k quarter-hour snapshots plus the
  /// current room temperature as the last history entry.
  HouseholdState state(int h) const;

  Action bau_action(int h) const { return bau_policy(houses_[h].room_temp, setpoint(h)); }

  std::vector<Action> bau_actions() const;

  std::vector<double> heater_powers() const;
  double total_heater_power() const;

  /// Advances every house by one minute under the given actions. Returns the
  /// per-house energy consumed (kWh).
  std::vector<double> step_minute(std::span<const Action> actions);

  /// Advances every house by one 15-minute step; requires the clock to sit on
  /// a quarter-hour boundary.
  std::vector<double> step_quarter(std::span<const Action> actions);

 private:
  void record_boundary_snapshots();

  std::vector<HouseSim> houses_;
  const WeatherTrace* weather_;
  ClusterOptions opts_;
  std::vector<std::deque<double>> history_;  // k most recent boundary temps per house
  std::vector<Rng> noise_;
  std::int64_t minute_ = 0;
};

/// Seeded heterogeneous cluster physics. R and C are drawn from broad
/// plausible ranges; P is then sized so every house can hold its warmest
/// setpoint one degree above target at the design outdoor temperature,
/// which the comfort guarantee requires.
std::vector<ThermalParams> sample_cluster_params(std::uint64_t seed, int n_houses,
                                                 double design_outdoor_temp,
                                                 double max_setpoint);

/// Runs `days` of closed-loop simulation at cadence dt (1 or 15 minutes) and
/// returns the per-house daily episode logs. One policy per house; weather
/// must cover the whole horizon.
std::vector<std::vector<Episode>> simulate_period(ClusterSim& cluster,
                                                  std::span<const PolicyFn> policies,
                                                  int days, int dt_minutes);

/// Convenience wrapper constructing the ClusterSim internally.
std::vector<std::vector<Episode>> simulate_period(std::vector<HouseSim> houses,
                                                  std::span<const PolicyFn> policies,
                                                  const WeatherTrace& weather, int days,
                                                  int dt_minutes,
                                                  const ClusterOptions& opts = {});

}  // namespace flexgrid
