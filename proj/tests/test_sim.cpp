#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "flexgrid/bau.hpp"
#include "flexgrid/cluster.hpp"
#include "flexgrid/errors.hpp"
#include "flexgrid/experience.hpp"
#include "flexgrid/rng.hpp"
#include "flexgrid/setpoints.hpp"
#include "flexgrid/thermal.hpp"
#include "flexgrid/weather.hpp"

using namespace flexgrid;

namespace {

ThermalParams reference_params() {
  ThermalParams p;
  p.id = 1;
  p.resistance_k_per_kw = 4.0;
  p.capacitance_kwh_per_k = 8.0;
  p.heater_kw = 2.0;
  return p;
}

WeatherTrace constant_weather(double temp, int days) {
  WeatherTrace w;
  w.resolution_minutes = 15;
  w.samples.assign(std::size_t(days) * 96, temp);
  return w;
}

}  // namespace

TEST_CASE("one heated quarter-hour step matches the hand-evaluated update") {
  // T' = T + (dt/C) * ((To - T)/R + u*P), dt in hours
  const ThermalParams p = reference_params();
  const double next = step_room_temp(p, 20.0, 0.0, Action::On, 15.0);
  CHECK(next == doctest::Approx(19.90625).epsilon(1e-12));
  const double coast = step_room_temp(p, 20.0, 0.0, Action::Off, 15.0);
  CHECK(coast == doctest::Approx(20.0 - 0.25 / 8.0 * 5.0).epsilon(1e-12));
}

TEST_CASE("heating raises the room exactly when below the ON equilibrium") {
  const ThermalParams p = reference_params();
  const double eq = p.equilibrium_on(0.0);
  CHECK(eq == doctest::Approx(8.0));
  CHECK(step_room_temp(p, eq - 1.0, 0.0, Action::On, 15.0) > eq - 1.0);
  CHECK(step_room_temp(p, eq + 1.0, 0.0, Action::On, 15.0) < eq + 1.0);
  CHECK(step_room_temp(p, eq, 0.0, Action::On, 15.0) == doctest::Approx(eq));
}

TEST_CASE("only 1 and 15 minute steps are legal") {
  const ThermalParams p = reference_params();
  CHECK_THROWS_AS(step_room_temp(p, 20.0, 0.0, Action::On, 5.0), ContractViolation);
  CHECK_THROWS_AS(step_room_temp(p, 20.0, 0.0, Action::On, 0.0), ContractViolation);
  CHECK_NOTHROW(step_room_temp(p, 20.0, 0.0, Action::On, 1.0));
}

TEST_CASE("fifteen minute-steps land close to one quarter step") {
  const ThermalParams p = reference_params();
  double t_fine = 20.0;
  for (int i = 0; i < 15; ++i) t_fine = step_room_temp(p, t_fine, -5.0, Action::On, 1.0);
  const double t_coarse = step_room_temp(p, 20.0, -5.0, Action::On, 15.0);
  CHECK(std::abs(t_fine - t_coarse) < 0.05);
}

TEST_CASE("trajectories from different initial temperatures contract") {
  // per-step gap decay is (1 - dt/(R*C)); two days suffice for R*C = 8 h
  ThermalParams p = reference_params();
  p.resistance_k_per_kw = 2.0;
  p.capacitance_kwh_per_k = 4.0;
  double a = 18.0, b = 22.0;
  for (int i = 0; i < 192; ++i) {
    a = step_room_temp(p, a, 0.0, Action::On, 15.0);
    b = step_room_temp(p, b, 0.0, Action::On, 15.0);
  }
  CHECK(std::abs(a - b) < 0.05);
}

TEST_CASE("thermostat switches strictly above the setpoint") {
  CHECK(bau_policy(19.9, 20.0) == Action::On);
  CHECK(bau_policy(20.0, 20.0) == Action::On);  // boundary heats
  CHECK(bau_policy(20.1, 20.0) == Action::Off);
}

TEST_CASE("step cost is metered energy") {
  CHECK(step_cost(Action::On, 2.0, 15.0) == doctest::Approx(0.5));
  CHECK(step_cost(Action::On, 2.0, 1.0) == doctest::Approx(2.0 / 60.0));
  CHECK(step_cost(Action::Off, 2.0, 15.0) == 0.0);
  CHECK_THROWS_AS(step_cost(Action::On, 2.0, 0.0), ContractViolation);
}

TEST_CASE("aggregate power sums the running heaters") {
  const std::vector<Action> acts{Action::On, Action::Off, Action::On};
  const std::vector<double> powers{2.0, 3.0, 3.0};
  CHECK(aggregate_power(acts, powers) == doctest::Approx(5.0));
}

TEST_CASE("setpoint schedules are piecewise constant from midnight") {
  const SetpointSchedule flat;
  CHECK(flat.at(0) == doctest::Approx(20.0));
  CHECK(flat.at(1439) == doctest::Approx(20.0));

  const SetpointSchedule sched({{0, 20.0}, {1020, 21.5}, {1320, 20.0}});
  CHECK(sched.at(1019) == doctest::Approx(20.0));
  CHECK(sched.at(1020) == doctest::Approx(21.5));
  CHECK(sched.at(1319) == doctest::Approx(21.5));
  CHECK(sched.at(1320) == doctest::Approx(20.0));
  CHECK(sched.min_setpoint() == doctest::Approx(20.0));
  CHECK(sched.max_setpoint() == doctest::Approx(21.5));
  CHECK_THROWS_AS(sched.at(-1), ContractViolation);
  CHECK_THROWS_AS(sched.at(1440), ContractViolation);
}

TEST_CASE("schedule construction rejects malformed breakpoint lists") {
  CHECK_THROWS_AS(SetpointSchedule({{10, 20.0}}), ConfigError);          // must start at 0
  CHECK_THROWS_AS(SetpointSchedule({{0, 20.0}, {0, 21.0}}), ConfigError);  // strictly increasing
  CHECK_THROWS_AS(SetpointSchedule({{0, 30.0}}), ConfigError);           // outside [15, 25]
  CHECK_THROWS_AS(SetpointSchedule(std::vector<std::pair<int, double>>{}), ConfigError);
}

TEST_CASE("evening-step profile raises the target between its bounds") {
  const SetpointSchedule s = make_setpoints(SetpointProfile::EveningStep, 20.0, 7);
  CHECK(s.at(1019) == doctest::Approx(20.0));
  CHECK(s.at(1020) == doctest::Approx(21.5));
  CHECK(s.at(1319) == doctest::Approx(21.5));
  CHECK(s.at(1320) == doctest::Approx(20.0));

  const SetpointSchedule f = make_setpoints(SetpointProfile::Flat, 20.0, 7);
  CHECK(f.breakpoints().size() == 1);
}

TEST_CASE("setpoint jitter is deterministic in the seed") {
  SetpointOptions o;
  o.jitter_minutes = 30;
  const SetpointSchedule a = make_setpoints(SetpointProfile::EveningStep, 20.0, 11, o);
  const SetpointSchedule b = make_setpoints(SetpointProfile::EveningStep, 20.0, 11, o);
  CHECK(a.breakpoints() == b.breakpoints());
}

TEST_CASE("weather stays in range, repeats with the seed, peaks on schedule") {
  WeatherOptions o;
  const WeatherTrace w = make_weather(3, 2, 15, o);
  CHECK(int(w.samples.size()) == 2 * 96);
  for (double t : w.samples) {
    CHECK(t >= o.t_min);
    CHECK(t <= o.t_max);
  }
  const WeatherTrace w2 = make_weather(3, 2, 15, o);
  CHECK(w.samples == w2.samples);

  // piecewise constant at the sample resolution
  CHECK(w.at_minute(0) == w.at_minute(14));
  CHECK(w.covers(2 * 1440));
  CHECK_FALSE(w.covers(2 * 1440 + 1));
  CHECK_THROWS_AS(w.at_minute(2 * 1440), ConfigError);

  WeatherOptions pure;
  pure.noise_amplitude = 0.0;
  const WeatherTrace p = make_weather(3, 1, 15, pure);
  int argmin = 0, argmax = 0;
  for (int i = 0; i < 96; ++i) {
    if (p.samples[std::size_t(i)] < p.samples[std::size_t(argmin)]) argmin = i;
    if (p.samples[std::size_t(i)] > p.samples[std::size_t(argmax)]) argmax = i;
  }
  CHECK(argmin == 6 * 4);   // 06:00
  CHECK(argmax == 15 * 4);  // 15:00
}

TEST_CASE("cluster clock and history bookkeeping") {
  const WeatherTrace w = constant_weather(0.0, 2);
  std::vector<HouseSim> houses{HouseSim{reference_params(), 20.0, SetpointSchedule()}};
  ClusterOptions opts;
  opts.history_order = 2;
  ClusterSim c(houses, &w, opts);

  CHECK(c.minute() == 0);
  CHECK(c.day() == 0);
  HouseholdState x0 = c.state(0);
  CHECK(x0.minute_of_day == 0);
  CHECK(x0.history_order() == 2);
  CHECK(x0.room_temp() == doctest::Approx(20.0));
  // before any step the ring is primed with the initial temperature
  CHECK(x0.room_temp_history(0) == doctest::Approx(20.0));

  std::vector<Action> on{Action::On};
  c.step_quarter(on);
  CHECK(c.minute() == 15);
  HouseholdState x1 = c.state(0);
  CHECK(x1.minute_of_day == 15);
  CHECK(x1.room_temp() == doctest::Approx(19.90625));
  CHECK(x1.room_temp_history(1) == doctest::Approx(20.0));  // previous boundary

  // fifteen minute steps advance the same wall-clock distance
  for (int i = 0; i < 15; ++i) c.step_minute(on);
  CHECK(c.minute() == 30);
  CHECK(c.minute_of_day() == 30);
}

TEST_CASE("minute stepping only refreshes history at quarter boundaries") {
  const WeatherTrace w = constant_weather(0.0, 1);
  std::vector<HouseSim> houses{HouseSim{reference_params(), 20.0, SetpointSchedule()}};
  ClusterSim c(houses, &w, {});
  std::vector<Action> on{Action::On};
  c.step_minute(on);
  HouseholdState x = c.state(0);
  // the last ring entry tracks the live temperature, older entries stay put
  CHECK(x.room_temp() < 20.0);
  CHECK(x.room_temp_history(x.history_order() - 1) == doctest::Approx(20.0));
}

TEST_CASE("cluster noise is deterministic per seed and house") {
  const WeatherTrace w = constant_weather(0.0, 1);
  ClusterOptions opts;
  opts.noise_sigma = 0.05;
  opts.noise_seed = 99;
  auto build = [&] {
    std::vector<HouseSim> houses{HouseSim{reference_params(), 20.0, SetpointSchedule()},
                                 HouseSim{reference_params(), 20.0, SetpointSchedule()}};
    return ClusterSim(houses, &w, opts);
  };
  ClusterSim a = build();
  ClusterSim b = build();
  std::vector<Action> acts{Action::On, Action::On};
  for (int i = 0; i < 8; ++i) {
    a.step_quarter(acts);
    b.step_quarter(acts);
  }
  CHECK(a.house(0).room_temp == doctest::Approx(b.house(0).room_temp));
  CHECK(a.house(1).room_temp == doctest::Approx(b.house(1).room_temp));
  // distinct per-house streams
  CHECK(a.house(0).room_temp != a.house(1).room_temp);
}

TEST_CASE("simulate_period produces daily thermostat episodes") {
  const WeatherTrace w = constant_weather(0.0, 3);
  ThermalParams strong = reference_params();
  strong.heater_kw = 6.0;  // can hold the setpoint at 0 degC outdoors
  std::vector<HouseSim> houses{HouseSim{strong, 20.0, SetpointSchedule()}};
  std::vector<PolicyFn> policies{bau_policy_fn()};
  auto logs = simulate_period(houses, policies, w, 2, 15);
  REQUIRE(logs.size() == 1);
  REQUIRE(logs[0].size() == 2);
  const Episode& day0 = logs[0][0];
  CHECK(day0.day == 0);
  REQUIRE(int(day0.steps.size()) == 96);
  CHECK_FALSE(day0.steps[0].terminal);
  CHECK(day0.steps[95].terminal);
  // thermostat keeps the room inside the band the whole day
  for (const Transition& t : day0.steps) {
    CHECK(t.state.room_temp() > 19.0);
    CHECK(t.state.room_temp() < 21.0);
    CHECK(t.cost >= 0.0);
  }
  // chronology: minute of day increases by 15 within the day
  for (int s = 1; s < 96; ++s)
    CHECK(day0.steps[std::size_t(s)].state.minute_of_day ==
          day0.steps[std::size_t(s - 1)].state.minute_of_day + 15);
}

TEST_CASE("sampled clusters can hold the warmest setpoint at design weather") {
  const auto params = sample_cluster_params(5, 16, -5.0, 21.5);
  REQUIRE(int(params.size()) == 16);
  for (const ThermalParams& p : params) {
    CHECK(p.equilibrium_on(-5.0) >= 21.5 + 1.0);
    CHECK(p.id >= 1);
  }
  const auto again = sample_cluster_params(5, 16, -5.0, 21.5);
  for (std::size_t i = 0; i < params.size(); ++i)
    CHECK(params[i].heater_kw == doctest::Approx(again[i].heater_kw));
}

TEST_CASE("experience buffer keeps a sliding window of whole days") {
  ExperienceBuffer buf(2);
  auto day = [&](int day_index) {
    std::vector<Transition> out;
    for (int s = 0; s < 96; ++s) {
      Transition t;
      t.state = make_state(s * 15, 0.0, 20.0 + day_index, 4);
      t.next_state = make_state((s * 15 + 15) % 1440, 0.0, 20.0 + day_index, 4);
      t.action = Action::Off;
      t.cost = 0.0;
      t.terminal = s == 95;
      out.push_back(t);
    }
    return out;
  };
  buf.push_transitions(day(0));
  CHECK(buf.completed_days() == 1);
  CHECK(int(buf.size()) == 96);
  buf.push_transitions(day(1));
  buf.push_transitions(day(2));
  CHECK(buf.completed_days() == 2);
  CHECK(int(buf.size()) == 192);
  // oldest day evicted: every remaining state carries day 1 or 2 temperature
  for (const Transition& t : buf.flatten()) CHECK(t.state.room_temp() >= 21.0);

  // out-of-order transitions within a day are rejected
  Transition bad;
  bad.state = make_state(30, 0.0, 20.0, 4);
  ExperienceBuffer other(2);
  other.push_one(bad);
  Transition earlier;
  earlier.state = make_state(15, 0.0, 20.0, 4);
  earlier.next_state = make_state(30, 0.0, 20.0, 4);
  CHECK_THROWS_AS(other.push_one(earlier), ContractViolation);
}

TEST_CASE("substreams separate by name and index") {
  const std::uint64_t root = 42;
  CHECK(substream_seed(root, "a") != substream_seed(root, "b"));
  CHECK(substream_seed(root, "a", 0) != substream_seed(root, "a", 1));
  CHECK(substream_seed(root, "a", 7) == substream_seed(root, "a", 7));

  Rng r(substream_seed(root, "t"));
  for (int i = 0; i < 1000; ++i) {
    const double u = r.uniform(2.0, 3.0);
    CHECK(u >= 2.0);
    CHECK(u < 3.0);
    CHECK(std::isfinite(r.gaussian(0.0, 1.0)));
  }
}
