#pragma once

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "flexgrid/cluster.hpp"
#include "flexgrid/csv.hpp"
#include "flexgrid/qfunction.hpp"
#include "flexgrid/rank.hpp"
#include "flexgrid/types.hpp"

namespace flexgrid {

struct DREvent {
  int event_id = 0;
  int start_minute = 0;  // absolute simulation minute
  int duration_min = 40;
  Direction direction = Direction::Up;
  std::vector<double> target_kw;  // one entry per event minute
  /// Consumption level the signal rides on; the dispatcher feeds the excess
  /// above it forward as the requested deviation. NaN means "derive from the
  /// signal" (min of the targets for UP events, max for DOWN).
  double baseline_kw = std::numeric_limits<double>::quiet_NaN();
};

/// Square tracking signal: the first half of every period sits at
/// baseline +/- amplitude (sign follows the direction), the second half at the
/// baseline itself.
DREvent make_square_event(int event_id, int start_minute, int duration_min, Direction direction,
                          double baseline_kw, double amplitude_kw, int half_period_min = 10);

/// Heater power of houses that could still deviate in the event's direction
/// without leaving the comfort band.
double flexible_capacity(std::span<const Action> bau, std::span<const double> room_temps,
                         std::span<const double> setpoints, std::span<const double> powers,
                         Direction direction, double band = 1.0);

struct DispatchOptions {
  double kp = 0.6;
  double ki = 0.15;           // per minute
  bool freeze_rank_order = true;
  int action_block_min = 1;   // > 1 only for the oracle-gap harness
  double comfort_band = 1.0;  // degC
  /// Invoked at the top of every event minute, before actions are chosen;
  /// lets the caller snapshot cluster state at quarter-hour boundaries.
  std::function<void(const ClusterSim&)> on_minute_start;
};

/// Advantage of deviating for one household; houses are addressed by cluster
/// index. Backed by a QFunction in production and by DP tables in tests.
using AdvantageFn = std::function<double(int house_index, const HouseholdState& state,
                                         double setpoint, Action u)>;

struct TraceRow {
  int event_id = 0;
  int minute = 0;  // absolute simulation minute
  double target_kw = 0.0;
  double achieved_kw = 0.0;
  int house_id = 0;
  Action action = Action::Off;
  double room_temp = 0.0;  // after the minute's thermal step
  bool overridden = false;
  double energy_kwh = 0.0;  // per-minute energy, kept for training synthesis
};

struct DispatchTrace {
  int event_id = 0;
  Direction direction = Direction::Up;
  int start_minute = 0;
  int duration_min = 0;
  RankTable ranks;  // table used at event start
  std::vector<TraceRow> rows;

  double mae_kw() const;
  int override_count() const;
};

/// Rank-order activation: walk ranks ascending, flipping houses to the event
/// action until the cumulative flipped power first meets or exceeds the
/// command; everyone else follows their thermostat. Houses whose thermostat
/// already wants the event action contribute nothing to the walk, and houses
/// the comfort filter would veto are skipped outright, so the command is
/// denominated in deliverable deviation power.
std::vector<Action> select_activations(const RankTable& rank, double command_kw,
                                       std::span<const int> house_ids,
                                       std::span<const Action> bau,
                                       std::span<const double> room_temps,
                                       std::span<const double> setpoints,
                                       std::span<const double> powers, double band = 1.0);

/// Reactive comfort override at the band edge; flags entries it changed.
std::vector<Action> comfort_filter(std::span<const Action> proposed,
                                   std::span<const double> room_temps,
                                   std::span<const double> setpoints, double band,
                                   std::vector<char>& overridden);

/// Minute-cadence tracking loop over [start, start + duration). The cluster
/// clock must sit at the event start; afterwards it sits at the first
/// post-event minute and the caller resumes thermostat operation.
DispatchTrace run_dr_event(ClusterSim& cluster, const AdvantageFn& advantage,
                           const DREvent& event, const DispatchOptions& opts = {});
DispatchTrace run_dr_event(ClusterSim& cluster, std::span<const QFunction* const> qfns,
                           const DREvent& event, const DispatchOptions& opts = {});

void append_trace_rows(CsvWriter& out, const DispatchTrace& trace);

}  // namespace flexgrid
