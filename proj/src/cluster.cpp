#include "flexgrid/cluster.hpp"

#include <utility>

namespace flexgrid {

ClusterSim::ClusterSim(std::vector<HouseSim> houses, const WeatherTrace* weather,
                       const ClusterOptions& opts)
    : houses_(std::move(houses)), weather_(weather), opts_(opts) {
  if (houses_.empty()) throw ConfigError("ClusterSim: empty cluster");
  if (weather_ == nullptr || weather_->samples.empty())
    throw ConfigError("ClusterSim: weather trace required");
  if (opts_.history_order < 0) throw ConfigError("ClusterSim: history order must be >= 0");
  history_.resize(houses_.size());
  for (std::size_t h = 0; h < houses_.size(); ++h) {
    history_[h].assign(static_cast<std::size_t>(opts_.history_order), houses_[h].room_temp);
    noise_.emplace_back(substream_seed(opts_.noise_seed, "noise", static_cast<std::uint64_t>(h)));
  }
}

HouseholdState ClusterSim::state(int h) const {
  const auto& ring = history_[h];
  HouseholdState s;
  s.minute_of_day = minute_of_day();
  s.outdoor_temp = outdoor_now();
  s.room_temp_history.resize(static_cast<Eigen::Index>(ring.size()) + 1);
  Eigen::Index i = 0;
  for (double t : ring) s.room_temp_history(i++) = t;
  s.room_temp_history(i) = houses_[h].room_temp;
  return s;
}

std::vector<Action> ClusterSim::bau_actions() const {
  std::vector<Action> actions(houses_.size());
  for (int h = 0; h < size(); ++h) actions[h] = bau_action(h);
  return actions;
}

std::vector<double> ClusterSim::heater_powers() const {
  std::vector<double> p(houses_.size());
  for (std::size_t h = 0; h < houses_.size(); ++h) p[h] = houses_[h].params.heater_kw;
  return p;
}

double ClusterSim::total_heater_power() const {
  double total = 0.0;
  for (const auto& h : houses_) total += h.params.heater_kw;
  return total;
}

void ClusterSim::record_boundary_snapshots() {
  if (opts_.history_order == 0) return;
  for (std::size_t h = 0; h < houses_.size(); ++h) {
    history_[h].push_back(houses_[h].room_temp);
    if (static_cast<int>(history_[h].size()) > opts_.history_order) history_[h].pop_front();
  }
}

std::vector<double> ClusterSim::step_minute(std::span<const Action> actions) {
  if (static_cast<int>(actions.size()) != size())
    throw ContractViolation("ClusterSim::step_minute: one action per house required");
  if (minute_ % kQuarterMinutes == 0) record_boundary_snapshots();
  const double t_out = outdoor_now();
  std::vector<double> energy(houses_.size());
  for (std::size_t h = 0; h < houses_.size(); ++h) {
    // noise_sigma is the per-quarter-hour disturbance; scale by sqrt(1/15) so
    // both cadences carry the same noise power per unit time.
    const double noise = opts_.noise_sigma > 0.0
                             ? noise_[h].gaussian(0.0, opts_.noise_sigma * 0.2581988897471611)
                             : 0.0;
    energy[h] = step_cost(actions[h], houses_[h].params.heater_kw, 1.0);
    step_house(houses_[h], t_out, actions[h], 1.0, noise);
  }
  ++minute_;
  return energy;
}

std::vector<double> ClusterSim::step_quarter(std::span<const Action> actions) {
  if (static_cast<int>(actions.size()) != size())
    throw ContractViolation("ClusterSim::step_quarter: one action per house required");
  if (minute_ % kQuarterMinutes != 0)
    throw ContractViolation("ClusterSim::step_quarter: clock not on a quarter-hour boundary");
  record_boundary_snapshots();
  const double t_out = outdoor_now();
  std::vector<double> energy(houses_.size());
  for (std::size_t h = 0; h < houses_.size(); ++h) {
    const double noise =
        opts_.noise_sigma > 0.0 ? noise_[h].gaussian(0.0, opts_.noise_sigma) : 0.0;
    energy[h] = step_cost(actions[h], houses_[h].params.heater_kw, 15.0);
    step_house(houses_[h], t_out, actions[h], 15.0, noise);
  }
  minute_ += kQuarterMinutes;
  return energy;
}

std::vector<ThermalParams> sample_cluster_params(std::uint64_t seed, int n_houses,
                                                 double design_outdoor_temp,
                                                 double max_setpoint) {
  std::vector<ThermalParams> params;
  params.reserve(static_cast<std::size_t>(n_houses));
  for (int i = 0; i < n_houses; ++i) {
    Rng rng(substream_seed(seed, "params", static_cast<std::uint64_t>(i)));
    ThermalParams p;
    p.id = i + 1;
    p.resistance_k_per_kw = rng.uniform(3.5, 5.0);
    p.capacitance_kwh_per_k = rng.uniform(5.0, 12.0);
    // Heaters sit well above the comfort-feasibility floor at design
    // conditions, like real installations: duty cycles stay below ~50% in
    // mild weather, which keeps several houses dispatchable at any moment and
    // the per-house power step small next to the cluster's slack.
    const double p_floor =
        (max_setpoint + 1.0 + 0.5 - design_outdoor_temp) / p.resistance_k_per_kw;
    p.heater_kw = p_floor * rng.uniform(2.9, 3.3);
    p.validate(design_outdoor_temp, max_setpoint);
    params.push_back(p);
  }
  return params;
}

std::vector<std::vector<Episode>> simulate_period(ClusterSim& cluster,
                                                  std::span<const PolicyFn> policies,
                                                  int days, int dt_minutes) {
  if (static_cast<int>(policies.size()) != cluster.size())
    throw ConfigError("simulate_period: one policy per house required");
  if (dt_minutes != 1 && dt_minutes != 15)
    throw ConfigError("simulate_period: dt must be 1 or 15 minutes");
  if (days < 1) throw ConfigError("simulate_period: days must be >= 1");
  const std::int64_t horizon = cluster.minute() + std::int64_t(days) * kMinutesPerDay;
  if (!cluster.weather().covers(horizon))
    throw ConfigError("simulate_period: weather trace shorter than simulation horizon");

  const int n = cluster.size();
  const int steps_per_day = kMinutesPerDay / dt_minutes;
  std::vector<std::vector<Episode>> logs(static_cast<std::size_t>(n));

  std::vector<Action> actions(static_cast<std::size_t>(n));
  for (int d = 0; d < days; ++d) {
    const int day_index = cluster.day();
    std::vector<Episode> day_logs(static_cast<std::size_t>(n));
    for (int h = 0; h < n; ++h) {
      day_logs[h].house_id = cluster.house(h).params.id;
      day_logs[h].day = day_index;
      day_logs[h].steps.reserve(static_cast<std::size_t>(steps_per_day));
    }
    for (int s = 0; s < steps_per_day; ++s) {
      std::vector<HouseholdState> states(static_cast<std::size_t>(n));
      std::vector<double> setpoints(static_cast<std::size_t>(n));
      for (int h = 0; h < n; ++h) {
        states[h] = cluster.state(h);
        setpoints[h] = cluster.setpoint(h);
        actions[h] = policies[h](states[h], setpoints[h]);
      }
      const std::vector<double> energy =
          dt_minutes == 15 ? cluster.step_quarter(actions) : cluster.step_minute(actions);
      const bool terminal = (s == steps_per_day - 1);
      for (int h = 0; h < n; ++h) {
        Transition t;
        t.state = std::move(states[h]);
        t.setpoint = setpoints[h];
        t.action = actions[h];
        t.cost = energy[h];
        t.next_state = cluster.state(h);
        t.terminal = terminal;
        day_logs[h].steps.push_back(std::move(t));
      }
    }
    for (int h = 0; h < n; ++h) logs[h].push_back(std::move(day_logs[h]));
  }
  return logs;
}

std::vector<std::vector<Episode>> simulate_period(std::vector<HouseSim> houses,
                                                  std::span<const PolicyFn> policies,
                                                  const WeatherTrace& weather, int days,
                                                  int dt_minutes, const ClusterOptions& opts) {
  ClusterSim cluster(std::move(houses), &weather, opts);
  return simulate_period(cluster, policies, days, dt_minutes);
}

}  // namespace flexgrid
