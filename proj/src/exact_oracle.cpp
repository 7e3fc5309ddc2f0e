#include "flexgrid/exact_oracle.hpp"

#include <cmath>
#include <limits>

#include "flexgrid/bau.hpp"
#include "flexgrid/dispatch.hpp"
#include "flexgrid/errors.hpp"
#include "flexgrid/rng.hpp"
#include "flexgrid/toy_mdp.hpp"

namespace flexgrid {

namespace {

void validate_instance(const TinyInstance& inst) {
  const std::size_t n = inst.params.size();
  if (n == 0 || n > 3) throw DispatchError("tiny instance: 1 to 3 houses required");
  if (inst.initial_temp.size() != n || inst.setpoint.size() != n)
    throw DispatchError("tiny instance: per-house fields must match house count");
  if (inst.horizon_min <= 0 || inst.block_min <= 0 ||
      inst.horizon_min % inst.block_min != 0)
    throw DispatchError("tiny instance: horizon must be a multiple of the block length");
  if (int(inst.target_kw.size()) != inst.horizon_min)
    throw DispatchError("tiny instance: target must cover the horizon");
  for (std::size_t h = 0; h < n; ++h)
    if (std::abs(inst.initial_temp[h] - inst.setpoint[h]) > inst.comfort_band)
      throw DispatchError("tiny instance: initial temperature outside the comfort band");
}

}  // namespace

OracleResult exact_dispatch_oracle(const TinyInstance& inst) {
  validate_instance(inst);
  const int n = int(inst.params.size());
  const int blocks = inst.horizon_min / inst.block_min;
  const int bits = n * blocks;
  if (bits > 24)
    throw DispatchError("exact_dispatch_oracle: refusing search space beyond 2^24");

  OracleResult best;
  best.objective = std::numeric_limits<double>::infinity();
  best.deviation_energy_kwh = std::numeric_limits<double>::infinity();

  std::vector<double> temp(static_cast<std::size_t>(n));
  const std::uint64_t total = std::uint64_t(1) << bits;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    for (int h = 0; h < n; ++h) temp[std::size_t(h)] = inst.initial_temp[std::size_t(h)];
    double obj = 0.0, dev = 0.0;
    bool feasible = true;
    bool pruned = false;
    for (int t = 0; t < inst.horizon_min && feasible && !pruned; ++t) {
      const int b = t / inst.block_min;
      double g = 0.0;
      for (int h = 0; h < n; ++h) {
        const Action u =
            (mask >> (h * blocks + b)) & 1 ? Action::On : Action::Off;
        const double p = inst.params[std::size_t(h)].heater_kw;
        if (u == Action::On) g += p;
        if (u != bau_policy(temp[std::size_t(h)], inst.setpoint[std::size_t(h)]))
          dev += p / 60.0;
        temp[std::size_t(h)] = step_room_temp(inst.params[std::size_t(h)],
                                              temp[std::size_t(h)], inst.outdoor_temp, u, 1.0);
        if (std::abs(temp[std::size_t(h)] - inst.setpoint[std::size_t(h)]) >
            inst.comfort_band + 1e-9)
          feasible = false;
      }
      obj += std::abs(inst.target_kw[std::size_t(t)] - g);
      // objective only grows, so a partial sum past the incumbent cannot win
      if (obj > best.objective + 1e-9) pruned = true;
    }
    if (!feasible || pruned) continue;
    ++best.feasible_count;
    const bool better = obj < best.objective - 1e-9 ||
                        (obj < best.objective + 1e-9 &&
                         dev < best.deviation_energy_kwh - 1e-12);
    if (better) {
      best.objective = obj;
      best.deviation_energy_kwh = dev;
      best.block_actions.assign(std::size_t(n), std::vector<Action>(std::size_t(blocks)));
      for (int h = 0; h < n; ++h)
        for (int b = 0; b < blocks; ++b)
          best.block_actions[std::size_t(h)][std::size_t(b)] =
              (mask >> (h * blocks + b)) & 1 ? Action::On : Action::Off;
    }
  }
  if (std::isinf(best.objective))
    throw DispatchError("exact_dispatch_oracle: no comfort-feasible schedule");
  return best;
}

double heuristic_objective(const TinyInstance& inst) {
  validate_instance(inst);
  const int n = int(inst.params.size());

  std::vector<DpTable> dp_tables;
  std::vector<ToyMdp> mdps;
  mdps.reserve(std::size_t(n));
  dp_tables.reserve(std::size_t(n));
  for (int h = 0; h < n; ++h) {
    ToyMdpOptions topt;
    topt.temp_min = inst.setpoint[std::size_t(h)] - inst.comfort_band - 0.5;
    topt.temp_max = inst.setpoint[std::size_t(h)] + inst.comfort_band + 0.5;
    topt.bin_width = 0.25;
    topt.setpoints = SetpointSchedule({{0, inst.setpoint[std::size_t(h)]}});
    topt.params = inst.params[std::size_t(h)];
    topt.outdoor_temp = inst.outdoor_temp;
    mdps.push_back(ToyMdp(topt));
    dp_tables.push_back(dp_oracle(mdps.back()));
  }
  AdvantageFn adv = [&](int h, const HouseholdState& x, double, Action u) {
    const ToyMdp& mdp = mdps[std::size_t(h)];
    const int s = std::min(x.minute_of_day / kQuarterMinutes, mdp.steps() - 1);
    const int b = mdp.nearest_bin(x.room_temp());
    return dp_advantage(dp_tables[std::size_t(h)], mdp, s, b, u);
  };

  std::vector<HouseSim> houses;
  houses.reserve(std::size_t(n));
  for (int h = 0; h < n; ++h)
    houses.push_back(HouseSim{inst.params[std::size_t(h)], inst.initial_temp[std::size_t(h)],
                              SetpointSchedule({{0, inst.setpoint[std::size_t(h)]}})});
  WeatherTrace weather;
  weather.start_minute = 0;
  weather.resolution_minutes = kQuarterMinutes;
  weather.samples.assign(std::size_t(inst.horizon_min / kQuarterMinutes + 2),
                         inst.outdoor_temp);
  ClusterOptions copts;
  copts.history_order = 4;
  ClusterSim cluster(std::move(houses), &weather, copts);

  DREvent event;
  event.event_id = inst.instance_id;
  event.start_minute = 0;
  event.duration_min = inst.horizon_min;
  event.direction = inst.direction;
  event.target_kw = inst.target_kw;

  DispatchOptions dopts;
  dopts.action_block_min = inst.block_min;
  dopts.comfort_band = inst.comfort_band;
  // With one or two houses the shed duty must rotate as the deviating house
  // drifts toward the band edge, or the comfort filter ends up chattering it
  // across the edge one minute at a time. Re-ranking each block hands the
  // duty to the house with thermal headroom, like the exhaustive schedules
  // the oracle searches over.
  dopts.freeze_rank_order = false;
  const DispatchTrace trace = run_dr_event(cluster, adv, event, dopts);

  double obj = 0.0;
  int last_minute = -1;
  for (const TraceRow& r : trace.rows) {
    if (r.minute == last_minute) continue;
    last_minute = r.minute;
    obj += std::abs(r.target_kw - r.achieved_kw);
  }
  return obj;
}

std::vector<TinyInstance> make_gap_instances(std::uint64_t seed, int count) {
  if (count < 1) throw ConfigError("gap instances: count must be positive");
  std::vector<TinyInstance> out;
  out.reserve(std::size_t(count));
  for (int i = 0; i < count; ++i) {
    Rng rng(substream_seed(seed, "gap", std::uint64_t(i)));
    TinyInstance inst;
    inst.instance_id = i;
    const int n = (i % 5 == 4) ? 1 : 2;
    inst.outdoor_temp = rng.uniform(-5.0, 5.0);
    for (int h = 0; h < n; ++h) {
      ThermalParams p;
      p.id = h + 1;
      p.resistance_k_per_kw = rng.uniform(2.5, 4.0);
      p.capacitance_kwh_per_k = rng.uniform(1.0, 2.0);
      inst.params.push_back(p);
      inst.setpoint.push_back(20.0);
      inst.initial_temp.push_back(20.0 + rng.uniform(-0.4, 0.4));
    }
    // One shared heater size per instance. The rank walk can only flip power
    // in prefix order, so with unequal heaters the oracle could reach
    // aggregate levels the heuristic structurally cannot, and the gap would
    // measure subset geometry instead of control quality. Sized from the
    // leakiest house so everyone holds the band with margin.
    double r_min = inst.params[0].resistance_k_per_kw;
    for (int h = 1; h < n; ++h)
      r_min = std::min(r_min, inst.params[std::size_t(h)].resistance_k_per_kw);
    const double p_shared = (20.0 - inst.outdoor_temp) / r_min * rng.uniform(1.4, 1.9);
    for (int h = 0; h < n; ++h) inst.params[std::size_t(h)].heater_kw = p_shared;
    inst.direction = rng.uniform() < 0.5 ? Direction::Up : Direction::Down;

    // Thermostat reference trajectory for the baseline and for exact-match
    // targets. Actions are held over dispatch blocks, like every schedule the
    // oracle can express and like the heuristic actually actuates; a
    // minute-cadence thermostat trace would sit outside both action spaces
    // and the zero-gap instances could never be reproduced exactly.
    std::vector<double> temp = inst.initial_temp;
    std::vector<Action> held(static_cast<std::size_t>(n), Action::Off);
    std::vector<double> bau_kw(std::size_t(inst.horizon_min), 0.0);
    for (int t = 0; t < inst.horizon_min; ++t) {
      double g = 0.0;
      for (int h = 0; h < n; ++h) {
        if (t % inst.block_min == 0)
          held[std::size_t(h)] =
              bau_policy(temp[std::size_t(h)], inst.setpoint[std::size_t(h)]);
        if (held[std::size_t(h)] == Action::On) g += inst.params[std::size_t(h)].heater_kw;
        temp[std::size_t(h)] =
            step_room_temp(inst.params[std::size_t(h)], temp[std::size_t(h)],
                           inst.outdoor_temp, held[std::size_t(h)], 1.0);
      }
      bau_kw[std::size_t(t)] = g;
    }

    if (i < 10) {
      inst.target_is_bau = true;
      inst.direction = Direction::Up;
      inst.target_kw = bau_kw;
    } else {
      std::vector<Action> bau0(static_cast<std::size_t>(n));
      std::vector<double> powers(static_cast<std::size_t>(n));
      for (int h = 0; h < n; ++h) {
        bau0[std::size_t(h)] =
            bau_policy(inst.initial_temp[std::size_t(h)], inst.setpoint[std::size_t(h)]);
        powers[std::size_t(h)] = inst.params[std::size_t(h)].heater_kw;
      }
      double cap = flexible_capacity(bau0, inst.initial_temp, inst.setpoint, powers,
                                     inst.direction, inst.comfort_band);
      if (cap <= 0.0) {
        inst.direction =
            inst.direction == Direction::Up ? Direction::Down : Direction::Up;
        cap = flexible_capacity(bau0, inst.initial_temp, inst.setpoint, powers,
                                inst.direction, inst.comfort_band);
      }
      // The square rides the thermostat reference, not a flat baseline: after
      // a deviating half the rooms need payback, and a frozen baseline would
      // park the off-halves below what the houses consume on their own, where
      // a one-sided dispatcher cannot follow but the oracle can.
      const double amplitude = cap * rng.uniform(0.3, 0.6);
      const double sign = inst.direction == Direction::Up ? 1.0 : -1.0;
      const double total = double(n) * p_shared;
      inst.target_kw.resize(std::size_t(inst.horizon_min));
      for (int t = 0; t < inst.horizon_min; ++t) {
        const bool peak = (t % 20) < 10;
        inst.target_kw[std::size_t(t)] = std::clamp(
            bau_kw[std::size_t(t)] + (peak ? sign * amplitude : 0.0), 0.0, total);
      }
    }
    out.push_back(std::move(inst));
  }
  return out;
}

std::vector<GapMeasurement> measure_optimality_gap(std::uint64_t seed, int count) {
  std::vector<GapMeasurement> out;
  const std::vector<TinyInstance> instances = make_gap_instances(seed, count);
  out.reserve(instances.size());
  for (const TinyInstance& inst : instances) {
    GapMeasurement m;
    m.instance_id = inst.instance_id;
    m.target_is_bau = inst.target_is_bau;
    m.oracle_objective = exact_dispatch_oracle(inst).objective;
    m.heuristic_objective = heuristic_objective(inst);
    out.push_back(m);
  }
  return out;
}

}  // namespace flexgrid
