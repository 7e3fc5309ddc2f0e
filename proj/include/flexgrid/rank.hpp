#pragma once

#include <span>
#include <string>
#include <vector>

#include "flexgrid/qfunction.hpp"
#include "flexgrid/types.hpp"

namespace flexgrid {

enum class Direction { Up, Down };

inline Action direction_action(Direction d) {
  return d == Direction::Up ? Action::On : Action::Off;
}

inline std::string to_string(Direction d) { return d == Direction::Up ? "UP" : "DOWN"; }

Direction direction_from_string(const std::string& s);

struct HouseSnapshot {
  int house_id = 0;
  HouseholdState state;
  double setpoint = 20.0;
};

struct RankEntry {
  int house_id = 0;
  Action action = Action::On;  // the event's deviation action
  double advantage_kwh = 0.0;
  int rank = 0;
};

struct RankTable {
  Direction direction = Direction::Up;
  std::vector<RankEntry> entries;  // ascending advantage, ties by house id

  const RankEntry* find(int house_id) const;
};

/// Dispatch ordering for one event: each house is scored with the advantage of
/// the event's action. Houses whose thermostat action already matches the
/// direction are assigned zero without consulting their model (their BAU
/// action is never evaluated as a deviation), which sorts them to the front.
RankTable build_rank_table(std::span<const QFunction* const> qfns,
                           std::span<const HouseSnapshot> snapshots, Direction direction);

}  // namespace flexgrid
