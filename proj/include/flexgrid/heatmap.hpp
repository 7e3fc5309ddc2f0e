#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "flexgrid/qfunction.hpp"
#include "flexgrid/setpoints.hpp"

namespace flexgrid {

/// Advantage-difference surface over (minute of day, room temperature):
/// cell = A(x, ON) - A(x, OFF). Positive cells mean switching ON is the
/// costlier deviation; the grid spans the schedule's setpoint range plus a
/// fixed band, with the temperature history filled by replication and a
/// frozen outdoor temperature.
struct HeatmapGrid {
  std::vector<int> minutes;
  std::vector<double> temps;
  Eigen::MatrixXd dis_advantage;  // rows follow temps, cols follow minutes
};

struct HeatmapOptions {
  double band = 2.0;
  double temp_step = 0.1;
  int minute_step = 15;
  int history_order = 4;
};

HeatmapGrid advantage_heatmap(const QFunction& qfn, double outdoor_temp,
                              const SetpointSchedule& setpoints, HeatmapOptions opts = {});

void write_heatmap_csv(const HeatmapGrid& grid, const std::string& path);

/// Temperature where a column leaves the near-zero plateau: the lowest grid
/// temperature from which every warmer cell sits at or above the threshold.
/// NaN when the column never settles above it.
double preference_boundary(const HeatmapGrid& grid, int col, double threshold);

}  // namespace flexgrid
