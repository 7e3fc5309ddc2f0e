#include "flexgrid/dispatch.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "flexgrid/bau.hpp"
#include "flexgrid/errors.hpp"
#include "flexgrid/pi.hpp"

namespace flexgrid {

DREvent make_square_event(int event_id, int start_minute, int duration_min, Direction direction,
                          double baseline_kw, double amplitude_kw, int half_period_min) {
  if (duration_min <= 0) throw ConfigError("square event: duration must be positive");
  if (half_period_min <= 0) throw ConfigError("square event: half period must be positive");
  if (amplitude_kw < 0.0) throw ConfigError("square event: amplitude must be non-negative");
  DREvent e;
  e.event_id = event_id;
  e.start_minute = start_minute;
  e.duration_min = duration_min;
  e.direction = direction;
  e.baseline_kw = baseline_kw;
  const double sign = direction == Direction::Up ? 1.0 : -1.0;
  e.target_kw.resize(std::size_t(duration_min));
  for (int t = 0; t < duration_min; ++t) {
    const bool peak = (t % (2 * half_period_min)) < half_period_min;
    e.target_kw[std::size_t(t)] = baseline_kw + (peak ? sign * amplitude_kw : 0.0);
  }
  return e;
}

double flexible_capacity(std::span<const Action> bau, std::span<const double> room_temps,
                         std::span<const double> setpoints, std::span<const double> powers,
                         Direction direction, double band) {
  if (bau.size() != room_temps.size() || bau.size() != setpoints.size() ||
      bau.size() != powers.size())
    throw ContractViolation("flexible_capacity: mismatched input lengths");
  const Action dev = direction_action(direction);
  double cap = 0.0;
  for (std::size_t h = 0; h < bau.size(); ++h) {
    if (bau[h] == dev) continue;
    const bool room_allows = dev == Action::On ? room_temps[h] < setpoints[h] + band
                                               : room_temps[h] > setpoints[h] - band;
    if (room_allows) cap += powers[h];
  }
  return cap;
}

double DispatchTrace::mae_kw() const {
  if (rows.empty()) return 0.0;
  double acc = 0.0;
  int minutes = 0;
  int last_minute = -1;
  for (const TraceRow& r : rows) {
    if (r.minute == last_minute) continue;
    last_minute = r.minute;
    acc += std::abs(r.target_kw - r.achieved_kw);
    ++minutes;
  }
  return acc / minutes;
}

int DispatchTrace::override_count() const {
  int n = 0;
  for (const TraceRow& r : rows) n += r.overridden ? 1 : 0;
  return n;
}

std::vector<Action> select_activations(const RankTable& rank, double command_kw,
                                       std::span<const int> house_ids,
                                       std::span<const Action> bau,
                                       std::span<const double> room_temps,
                                       std::span<const double> setpoints,
                                       std::span<const double> powers, double band) {
  if (house_ids.size() != bau.size() || house_ids.size() != powers.size() ||
      house_ids.size() != room_temps.size() || house_ids.size() != setpoints.size())
    throw ContractViolation("select_activations: mismatched input lengths");
  std::unordered_map<int, std::size_t> index_of;
  index_of.reserve(house_ids.size());
  for (std::size_t h = 0; h < house_ids.size(); ++h) index_of.emplace(house_ids[h], h);

  std::vector<Action> out(bau.begin(), bau.end());
  const Action dev = direction_action(rank.direction);
  double flipped_kw = 0.0;
  for (const RankEntry& entry : rank.entries) {
    if (flipped_kw >= command_kw) break;
    const auto it = index_of.find(entry.house_id);
    if (it == index_of.end())
      throw DispatchError("select_activations: rank entry for unknown house " +
                          std::to_string(entry.house_id));
    const std::size_t h = it->second;
    // A house whose thermostat already wants the event action is not a
    // deviation; it does not consume any of the command.
    if (bau[h] == dev) {
      out[h] = dev;
      continue;
    }
    // Skip houses the comfort filter would veto: flipping them delivers
    // nothing and would strand part of the command on dead weight.
    const bool vetoed = dev == Action::On ? room_temps[h] >= setpoints[h] + band
                                          : room_temps[h] <= setpoints[h] - band;
    if (vetoed) continue;
    out[h] = dev;
    flipped_kw += powers[h];
  }
  return out;
}

std::vector<Action> comfort_filter(std::span<const Action> proposed,
                                   std::span<const double> room_temps,
                                   std::span<const double> setpoints, double band,
                                   std::vector<char>& overridden) {
  if (proposed.size() != room_temps.size() || proposed.size() != setpoints.size())
    throw ContractViolation("comfort_filter: mismatched input lengths");
  std::vector<Action> out(proposed.begin(), proposed.end());
  overridden.assign(proposed.size(), 0);
  for (std::size_t h = 0; h < proposed.size(); ++h) {
    Action forced = out[h];
    if (room_temps[h] >= setpoints[h] + band)
      forced = Action::Off;
    else if (room_temps[h] <= setpoints[h] - band)
      forced = Action::On;
    if (forced != out[h]) {
      out[h] = forced;
      overridden[h] = 1;
    }
  }
  return out;
}

DispatchTrace run_dr_event(ClusterSim& cluster, const AdvantageFn& advantage,
                           const DREvent& event, const DispatchOptions& opts) {
  if (event.duration_min <= 0 || int(event.target_kw.size()) != event.duration_min)
    throw DispatchError("run_dr_event: target signal must cover the event duration");
  if (cluster.minute() != event.start_minute)
    throw DispatchError("run_dr_event: cluster clock is not at the event start");
  if (opts.action_block_min < 1) throw DispatchError("run_dr_event: invalid action block");
  const int n = cluster.size();

  std::vector<int> house_ids(static_cast<std::size_t>(n));
  for (int h = 0; h < n; ++h) house_ids[std::size_t(h)] = cluster.house(h).params.id;
  const std::vector<double> powers = cluster.heater_powers();

  auto snapshot_ranks = [&]() {
    std::vector<HouseSnapshot> snaps;
    snaps.reserve(std::size_t(n));
    std::vector<double> advantages;
    RankTable table;
    table.direction = event.direction;
    const Action dev = direction_action(event.direction);
    for (int h = 0; h < n; ++h) {
      const HouseholdState x = cluster.state(h);
      const double sp = cluster.setpoint(h);
      RankEntry e;
      e.house_id = house_ids[std::size_t(h)];
      e.action = dev;
      e.advantage_kwh =
          bau_policy(x, sp) == dev ? 0.0 : advantage(h, x, sp, dev);
      table.entries.push_back(e);
    }
    std::sort(table.entries.begin(), table.entries.end(),
              [](const RankEntry& a, const RankEntry& b) {
                if (a.advantage_kwh != b.advantage_kwh)
                  return a.advantage_kwh < b.advantage_kwh;
                return a.house_id < b.house_id;
              });
    for (std::size_t i = 0; i < table.entries.size(); ++i)
      table.entries[i].rank = int(i) + 1;
    return table;
  };

  DispatchTrace trace;
  trace.event_id = event.event_id;
  trace.direction = event.direction;
  trace.start_minute = event.start_minute;
  trace.duration_min = event.duration_min;
  trace.ranks = snapshot_ranks();
  trace.rows.reserve(std::size_t(event.duration_min) * std::size_t(n));

  PIController pi;
  pi.kp = opts.kp;
  pi.ki = opts.ki;
  pi.out_max = cluster.total_heater_power();
  const double dir_sign = event.direction == Direction::Up ? 1.0 : -1.0;

  std::unordered_map<int, std::size_t> idx_of;
  idx_of.reserve(std::size_t(n));
  for (int h = 0; h < n; ++h) idx_of.emplace(house_ids[std::size_t(h)], std::size_t(h));

  // Deliverable flipped power comes in house-sized steps. The request snaps to
  // the nearer of the two bracketing steps, with a hold band around the step
  // commanded last minute: a bounded trim cannot chatter the marginal house at
  // one-minute cadence, which would roughly double the standing error. A NaN
  // previous command marks a fresh decision (event start or a reference step),
  // where the plain nearest step is the right choice.
  auto snap_level = [&](const RankTable& table, const std::vector<Action>& bau,
                        const std::vector<double>& temps, const std::vector<double>& sps,
                        double requested, double prev) {
    const Action dev = direction_action(event.direction);
    double lo = 0.0;
    double hi = -1.0;
    double cum = 0.0;
    for (const RankEntry& entry : table.entries) {
      const auto it = idx_of.find(entry.house_id);
      if (it == idx_of.end()) continue;
      const std::size_t h = it->second;
      if (bau[h] == dev) continue;
      const bool vetoed = dev == Action::On ? temps[h] >= sps[h] + opts.comfort_band
                                            : temps[h] <= sps[h] - opts.comfort_band;
      if (vetoed) continue;
      cum += powers[h];
      if (cum <= requested) {
        lo = cum;
      } else {
        hi = cum;
        break;
      }
    }
    if (hi <= lo) return lo;  // request meets or exhausts the reachable pool
    // The hold band is asymmetric: tipping one more house on is resisted hard
    // (the trim alone must not manage it), while dropping back to the lower
    // step is nearly neutral, so a step taken on a one-minute pool transient
    // heals instead of being captured.
    const double gap = hi - lo;
    double up_at = 0.5;
    if (std::abs(prev - lo) < 0.5 * gap) up_at = 0.8;
    else if (std::abs(prev - hi) < 0.5 * gap) up_at = 0.45;
    return requested - lo >= up_at * gap ? hi : lo;
  };

  std::vector<Action> held = cluster.bau_actions();
  RankTable current = trace.ranks;
  double err_prev = 0.0;
  double planned_resid = 0.0;
  double cmd_prev = std::numeric_limits<double>::quiet_NaN();

  for (int t = 0; t < event.duration_min; ++t) {
    if (opts.on_minute_start) opts.on_minute_start(cluster);
    const double target = event.target_kw[std::size_t(t)];
    std::vector<Action> bau = cluster.bau_actions();
    std::vector<double> temps(static_cast<std::size_t>(n)), sps(static_cast<std::size_t>(n));
    for (int h = 0; h < n; ++h) {
      temps[std::size_t(h)] = cluster.house(h).room_temp;
      sps[std::size_t(h)] = cluster.setpoint(h);
    }

    if (t % opts.action_block_min == 0) {
      if (!opts.freeze_rank_order && t > 0) current = snapshot_ranks();
      // A step in the reference is handled by the feedforward below; servo
      // state measured against the old level would only kick the first snaps
      // after the edge, so it is cleared and the quantizer decides fresh.
      if (t > 0 && target != event.target_kw[std::size_t(t - 1)]) {
        pi.integral = 0.0;
        err_prev = 0.0;
        planned_resid = 0.0;
        cmd_prev = std::numeric_limits<double>::quiet_NaN();
      }
      // The gap between the signal and what the thermostats would consume on
      // their own is known at decision time, so it is fed forward and the PI
      // only trims persistent residue; the integrator never has to ramp
      // across a square edge or absorb thermostat churn.
      const double ff = std::max(0.0, dir_sign * (target - aggregate_power(bau, powers)));
      // The distance from the request to the step actually commanded is a
      // standing error the actuator cannot remove. The servo is fed only the
      // surprise beyond that plan; chewing on the raw residual would ratchet
      // the trim across the hold band and park the marginal house on the
      // wrong side of the signal.
      const double trim =
          pi_update(pi, err_prev - planned_resid, double(opts.action_block_min));
      const double command = snap_level(current, bau, temps, sps, ff + trim, cmd_prev);
      planned_resid = ff - command;
      cmd_prev = command;
      held = select_activations(current, command, house_ids, bau, temps, sps, powers,
                                opts.comfort_band);
    }
    std::vector<char> overridden;
    const std::vector<Action> actions =
        comfort_filter(held, temps, sps, opts.comfort_band, overridden);

    const double achieved = aggregate_power(actions, powers);
    const std::vector<double> energy = cluster.step_minute(actions);
    for (int h = 0; h < n; ++h) {
      TraceRow row;
      row.event_id = event.event_id;
      row.minute = event.start_minute + t;
      row.target_kw = target;
      row.achieved_kw = achieved;
      row.house_id = house_ids[std::size_t(h)];
      row.action = actions[std::size_t(h)];
      row.room_temp = cluster.house(h).room_temp;
      row.overridden = overridden[std::size_t(h)] != 0;
      row.energy_kwh = energy[std::size_t(h)];
      trace.rows.push_back(row);
    }
    err_prev = dir_sign * (target - achieved);
  }
  return trace;
}

DispatchTrace run_dr_event(ClusterSim& cluster, std::span<const QFunction* const> qfns,
                           const DREvent& event, const DispatchOptions& opts) {
  if (int(qfns.size()) != cluster.size())
    throw DispatchError("run_dr_event: one model per house required");
  for (std::size_t h = 0; h < qfns.size(); ++h)
    if (qfns[h] == nullptr || !qfns[h]->trained())
      throw DispatchError("run_dr_event: refusing event, household " +
                          std::to_string(cluster.house(int(h)).params.id) +
                          " has no trained model");
  AdvantageFn adv = [&qfns](int h, const HouseholdState& x, double sp, Action u) {
    return qfns[std::size_t(h)]->advantage(x, sp, u);
  };
  return run_dr_event(cluster, adv, event, opts);
}

void append_trace_rows(CsvWriter& out, const DispatchTrace& trace) {
  for (const TraceRow& r : trace.rows)
    out.row({std::to_string(r.event_id), std::to_string(r.minute), fmt_g6(r.target_kw),
             fmt_g6(r.achieved_kw), std::to_string(r.house_id), to_string(r.action),
             fmt_g6(r.room_temp), r.overridden ? "1" : "0"});
}

}  // namespace flexgrid
