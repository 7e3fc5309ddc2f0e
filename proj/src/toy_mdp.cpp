#include "flexgrid/toy_mdp.hpp"

#include <algorithm>
#include <cmath>

#include "flexgrid/errors.hpp"

namespace flexgrid {

ToyMdp::ToyMdp(ToyMdpOptions opts) : opts_(std::move(opts)) {
  if (opts_.bin_width <= 0.0) throw ConfigError("toy mdp: bin width must be positive");
  if (opts_.temp_max < opts_.temp_min)
    throw ConfigError("toy mdp: temp_max must be >= temp_min");
  if (opts_.steps < 1) throw ConfigError("toy mdp: horizon must be at least one step");
  if (opts_.params.heater_kw <= 0.0 || opts_.params.resistance_k_per_kw <= 0.0 ||
      opts_.params.capacitance_kwh_per_k <= 0.0)
    throw ConfigError("toy mdp: thermal parameters must be positive");
  n_bins_ = int(std::lround((opts_.temp_max - opts_.temp_min) / opts_.bin_width)) + 1;
  // keep the top edge on the grid exactly
  opts_.temp_max = opts_.temp_min + opts_.bin_width * (n_bins_ - 1);
}

int ToyMdp::nearest_bin(double temp) const {
  const int b = int(std::lround((temp - opts_.temp_min) / opts_.bin_width));
  return std::clamp(b, 0, n_bins_ - 1);
}

int ToyMdp::next_bin(int b, Action u) const {
  if (b < 0 || b >= n_bins_) throw ContractViolation("toy mdp: bin index out of range");
  const double next =
      step_room_temp(opts_.params, bin_temp(b), opts_.outdoor_temp, u, kQuarterMinutes);
  return nearest_bin(next);
}

double ToyMdp::action_cost(Action u) const {
  return step_cost(u, opts_.params.heater_kw, kQuarterMinutes);
}

double ToyMdp::setpoint_at_step(int s) const {
  return opts_.setpoints.at((s * kQuarterMinutes) % kMinutesPerDay);
}

HouseholdState ToyMdp::state(int s, int b, int history_order) const {
  return make_state((s * kQuarterMinutes) % kMinutesPerDay, opts_.outdoor_temp, bin_temp(b),
                    history_order);
}

DpTable dp_oracle(const ToyMdp& mdp) {
  const int steps = mdp.steps(), bins = mdp.n_bins();
  if (std::int64_t(steps) * bins * 2 > 100000)
    throw ContractViolation("dp oracle: grid exceeds 1e5 state-action pairs");
  DpTable dp;
  dp.steps = steps;
  dp.bins = bins;
  dp.q.assign(std::size_t(steps) * bins * 2, 0.0);
  for (int s = steps - 1; s >= 0; --s) {
    for (int b = 0; b < bins; ++b) {
      for (Action u : {Action::Off, Action::On}) {
        const int nb = mdp.next_bin(b, u);
        if (nb < 0 || nb >= bins)
          throw ContractViolation("dp oracle: transition leaves the grid");
        double q = mdp.action_cost(u);
        if (s + 1 < steps) q += dp.q_at(s + 1, nb, mdp.bau(s + 1, nb));
        dp.q[std::size_t((s * bins + b) * 2 + to_int(u))] = q;
      }
    }
  }
  return dp;
}

double dp_value(const DpTable& dp, const ToyMdp& mdp, int s, int b) {
  return dp.q_at(s, b, mdp.bau(s, b));
}

double dp_advantage(const DpTable& dp, const ToyMdp& mdp, int s, int b, Action u) {
  return dp.q_at(s, b, u) - dp_value(dp, mdp, s, b);
}

std::vector<Transition> make_toy_transitions(const ToyMdp& mdp, int history_order) {
  std::vector<Transition> out;
  out.reserve(std::size_t(mdp.steps()) * mdp.n_bins() * 2);
  for (int s = 0; s < mdp.steps(); ++s) {
    for (int b = 0; b < mdp.n_bins(); ++b) {
      for (Action u : {Action::Off, Action::On}) {
        Transition t;
        t.state = mdp.state(s, b, history_order);
        t.setpoint = mdp.setpoint_at_step(s);
        t.action = u;
        t.cost = mdp.action_cost(u);
        t.next_state = mdp.state(s + 1, mdp.next_bin(b, u), history_order);
        t.terminal = (s + 1 == mdp.steps());
        out.push_back(std::move(t));
      }
    }
  }
  return out;
}

}  // namespace flexgrid
