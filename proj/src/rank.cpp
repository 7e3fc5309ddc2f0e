#include "flexgrid/rank.hpp"

#include <algorithm>

#include "flexgrid/bau.hpp"
#include "flexgrid/errors.hpp"

namespace flexgrid {

Direction direction_from_string(const std::string& s) {
  if (s == "UP" || s == "up") return Direction::Up;
  if (s == "DOWN" || s == "down") return Direction::Down;
  throw ConfigError("unknown event direction: " + s);
}

const RankEntry* RankTable::find(int house_id) const {
  for (const RankEntry& e : entries)
    if (e.house_id == house_id) return &e;
  return nullptr;
}

RankTable build_rank_table(std::span<const QFunction* const> qfns,
                           std::span<const HouseSnapshot> snapshots, Direction direction) {
  if (qfns.size() != snapshots.size())
    throw RankingError("build_rank_table: one model per snapshot required");
  RankTable table;
  table.direction = direction;
  const Action dev = direction_action(direction);
  table.entries.reserve(snapshots.size());
  for (std::size_t h = 0; h < snapshots.size(); ++h) {
    const HouseSnapshot& snap = snapshots[h];
    if (qfns[h] == nullptr || !qfns[h]->trained())
      throw RankingError("build_rank_table: household " + std::to_string(snap.house_id) +
                         " has no trained model");
    RankEntry e;
    e.house_id = snap.house_id;
    e.action = dev;
    const Action bau = bau_policy(snap.state, snap.setpoint);
    e.advantage_kwh = bau == dev ? 0.0 : qfns[h]->advantage(snap.state, snap.setpoint, dev);
    table.entries.push_back(e);
  }
  std::sort(table.entries.begin(), table.entries.end(),
            [](const RankEntry& a, const RankEntry& b) {
              if (a.advantage_kwh != b.advantage_kwh) return a.advantage_kwh < b.advantage_kwh;
              return a.house_id < b.house_id;
            });
  for (std::size_t i = 0; i < table.entries.size(); ++i) table.entries[i].rank = int(i) + 1;
  return table;
}

}  // namespace flexgrid
