#pragma once

#include <vector>

#include "flexgrid/bau.hpp"
#include "flexgrid/setpoints.hpp"
#include "flexgrid/thermal.hpp"
#include "flexgrid/types.hpp"

namespace flexgrid {

/// Small exactly solvable heating MDP: room temperature discretized onto a
/// uniform grid, deterministic RC dynamics snapped to the nearest bin, finite
/// horizon of 15-minute steps. Used to validate the learner against backward
/// induction.
struct ToyMdpOptions {
  double temp_min = 18.0;
  double temp_max = 22.0;
  double bin_width = 0.25;
  SetpointSchedule setpoints;
  ThermalParams params{1, 4.0, 4.0, 7.5};
  double outdoor_temp = 0.0;
  int steps = kStepsPerDay;
};

class ToyMdp {
 public:
  explicit ToyMdp(ToyMdpOptions opts = {});

  int n_bins() const { return n_bins_; }
  int steps() const { return opts_.steps; }
  double bin_temp(int b) const { return opts_.temp_min + opts_.bin_width * b; }
  int nearest_bin(double temp) const;
  int next_bin(int b, Action u) const;
  double action_cost(Action u) const;
  double setpoint_at_step(int s) const;
  Action bau(int s, int b) const { return bau_policy(bin_temp(b), setpoint_at_step(s)); }
  HouseholdState state(int s, int b, int history_order) const;
  const ToyMdpOptions& options() const { return opts_; }

 private:
  ToyMdpOptions opts_;
  int n_bins_ = 0;
};

/// Exact Q table from backward induction under the thermostat policy:
/// Q(s,b,u) = g(u) + Q(s+1, b', bau(b')), terminal layer bootstraps zero.
struct DpTable {
  int steps = 0;
  int bins = 0;
  std::vector<double> q;

  double q_at(int s, int b, Action u) const {
    return q[std::size_t((s * bins + b) * 2 + to_int(u))];
  }
};

DpTable dp_oracle(const ToyMdp& mdp);

double dp_value(const DpTable& dp, const ToyMdp& mdp, int s, int b);
double dp_advantage(const DpTable& dp, const ToyMdp& mdp, int s, int b, Action u);

/// Exhaustive transition set: every (step, bin, action) once, ordered by step
/// so chronological pushes hold. Histories are the bin temperature replicated.
std::vector<Transition> make_toy_transitions(const ToyMdp& mdp, int history_order = 4);

}  // namespace flexgrid
