#include "flexgrid/heatmap.hpp"

#include <cmath>
#include <limits>

#include "flexgrid/csv.hpp"
#include "flexgrid/errors.hpp"

namespace flexgrid {

HeatmapGrid advantage_heatmap(const QFunction& qfn, double outdoor_temp,
                              const SetpointSchedule& setpoints, HeatmapOptions opts) {
  if (!qfn.trained()) throw ContractViolation("advantage_heatmap: model not trained");
  if (opts.temp_step <= 0.0 || opts.band <= 0.0 || opts.minute_step <= 0 ||
      kMinutesPerDay % opts.minute_step != 0)
    throw ConfigError("advantage_heatmap: invalid grid options");

  HeatmapGrid grid;
  const double lo = setpoints.min_setpoint() - opts.band;
  const double hi = setpoints.max_setpoint() + opts.band;
  const int n_temps = int(std::lround((hi - lo) / opts.temp_step)) + 1;
  grid.temps.reserve(std::size_t(n_temps));
  for (int i = 0; i < n_temps; ++i) grid.temps.push_back(lo + opts.temp_step * i);
  for (int m = 0; m < kMinutesPerDay; m += opts.minute_step) grid.minutes.push_back(m);

  grid.dis_advantage.resize(n_temps, Eigen::Index(grid.minutes.size()));
  for (std::size_t c = 0; c < grid.minutes.size(); ++c) {
    const int minute = grid.minutes[c];
    const double sp = setpoints.at(minute);
    for (int r = 0; r < n_temps; ++r) {
      const HouseholdState x =
          make_state(minute, outdoor_temp, grid.temps[std::size_t(r)], opts.history_order);
      const double cell =
          qfn.advantage(x, sp, Action::On) - qfn.advantage(x, sp, Action::Off);
      if (!std::isfinite(cell))
        throw ContractViolation("advantage_heatmap: non-finite cell value");
      grid.dis_advantage(r, Eigen::Index(c)) = cell;
    }
  }
  return grid;
}

void write_heatmap_csv(const HeatmapGrid& grid, const std::string& path) {
  CsvWriter out(path, "minute,temp_c,dis_advantage_kwh");
  for (std::size_t c = 0; c < grid.minutes.size(); ++c)
    for (std::size_t r = 0; r < grid.temps.size(); ++r)
      out.row({std::to_string(grid.minutes[c]), fmt_g6(grid.temps[r]),
               fmt_g6(grid.dis_advantage(Eigen::Index(r), Eigen::Index(c)))});
}

double preference_boundary(const HeatmapGrid& grid, int col, double threshold) {
  if (col < 0 || col >= int(grid.minutes.size()))
    throw ContractViolation("preference_boundary: column out of range");
  const Eigen::Index rows = Eigen::Index(grid.temps.size());
  Eigen::Index first_of_tail = rows;  // start of the trailing >= threshold run
  for (Eigen::Index r = rows - 1; r >= 0; --r) {
    if (grid.dis_advantage(r, col) >= threshold)
      first_of_tail = r;
    else
      break;
  }
  if (first_of_tail == rows) return std::numeric_limits<double>::quiet_NaN();
  return grid.temps[std::size_t(first_of_tail)];
}

}  // namespace flexgrid
