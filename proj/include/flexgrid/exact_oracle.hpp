#pragma once

#include <cstdint>
#include <vector>

#include "flexgrid/rank.hpp"
#include "flexgrid/thermal.hpp"
#include "flexgrid/types.hpp"

namespace flexgrid {

/// Miniature dispatch problem small enough for exhaustive search: a handful
/// of houses, a short horizon, actions held over fixed blocks, hard comfort
/// band, and a per-minute tracking signal.
struct TinyInstance {
  int instance_id = 0;
  std::vector<ThermalParams> params;
  std::vector<double> initial_temp;
  std::vector<double> setpoint;
  double outdoor_temp = 0.0;
  int horizon_min = 40;
  int block_min = 5;
  double comfort_band = 1.0;
  Direction direction = Direction::Up;
  std::vector<double> target_kw;
  bool target_is_bau = false;
};

struct OracleResult {
  double objective = 0.0;            // sum over minutes of |target - aggregate|
  double deviation_energy_kwh = 0.0; // tie-break: energy spent off the thermostat action
  std::vector<std::vector<Action>> block_actions;  // [house][block]
  std::int64_t feasible_count = 0;
};

/// Exhaustive minimizer of the tracking objective over all comfort-feasible
/// block schedules. Ties resolve to the smallest thermostat deviation, then to
/// enumeration order. Refuses search spaces beyond 2^24.
OracleResult exact_dispatch_oracle(const TinyInstance& inst);

/// Tracking objective of the rank-and-PI heuristic on the same instance and
/// block discretization, with advantages supplied by per-house backward
/// induction tables.
double heuristic_objective(const TinyInstance& inst);

std::vector<TinyInstance> make_gap_instances(std::uint64_t seed, int count = 50);

struct GapMeasurement {
  int instance_id = 0;
  double oracle_objective = 0.0;
  double heuristic_objective = 0.0;
  bool target_is_bau = false;
};

std::vector<GapMeasurement> measure_optimality_gap(std::uint64_t seed, int count = 50);

}  // namespace flexgrid
