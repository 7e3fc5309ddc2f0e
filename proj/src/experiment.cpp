#include "flexgrid/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include <json.hpp>

#include "flexgrid/cluster.hpp"
#include "flexgrid/csv.hpp"
#include "flexgrid/errors.hpp"
#include "flexgrid/heatmap.hpp"
#include "flexgrid/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace flexgrid {
namespace {

constexpr const char* kEpisodesCsv = "episodes.csv";
constexpr const char* kTrainingLogCsv = "training_log.csv";
constexpr const char* kTracesCsv = "dispatch_traces.csv";
constexpr const char* kRankCsv = "rank_events.csv";
constexpr const char* kConsolidatedCsv = "consolidated_response.csv";
constexpr const char* kSummaryTxt = "summary.txt";
constexpr const char* kEventsJson = "events.json";
constexpr const char* kClusterJson = "cluster.json";
constexpr const char* kManifestJson = "manifest.json";

template <typename F>
void run_phase(const char* tag, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("[phase:") + tag + "] " + e.what());
  }
}

SetpointProfile profile_from_string(const std::string& s) {
  if (s == "flat") return SetpointProfile::Flat;
  if (s == "evening_step") return SetpointProfile::EveningStep;
  throw ConfigError("unknown setpoint profile '" + s + "' (want flat or evening_step)");
}

const char* profile_to_string(SetpointProfile p) {
  return p == SetpointProfile::Flat ? "flat" : "evening_step";
}

std::vector<SetpointProfile> resolve_profiles(const ExperimentConfig& cfg) {
  const auto& names = cfg.setpoints.profiles;
  std::vector<SetpointProfile> out;
  if (names.size() == 1) {
    out.assign(std::size_t(cfg.n_houses), profile_from_string(names[0]));
  } else {
    for (const std::string& s : names) out.push_back(profile_from_string(s));
  }
  return out;
}

double median_of(std::vector<double> v) {
  if (v.empty()) throw ContractViolation("median of empty range");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double population_std(const std::vector<double>& v) {
  if (v.empty()) throw ContractViolation("std of empty range");
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= double(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / double(v.size()));
}

json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["n_houses"] = cfg.n_houses;
  j["warmup_days"] = cfg.warmup_days;
  j["eval_days"] = cfg.eval_days;
  j["window_days"] = cfg.window_days;
  j["history_order"] = cfg.history_order;
  j["noise_sigma"] = cfg.noise_sigma;
  j["setpoints"] = {{"base", cfg.setpoints.base},
                    {"profiles", cfg.setpoints.profiles},
                    {"step_offset", cfg.setpoints.step_offset},
                    {"step_start_minute", cfg.setpoints.step_start_minute},
                    {"step_end_minute", cfg.setpoints.step_end_minute},
                    {"jitter_minutes", cfg.setpoints.jitter_minutes}};
  j["weather"] = {{"t_min", cfg.weather.t_min},
                  {"t_max", cfg.weather.t_max},
                  {"noise_amplitude", cfg.weather.noise_amplitude}};
  j["design_outdoor"] = cfg.design_outdoor;
  j["fqi"] = {{"iterations", cfg.fqi_iterations},
              {"regressor",
               {{"kind", cfg.regressor.kind},
                {"n_trees", cfg.regressor.n_trees},
                {"min_leaf", cfg.regressor.min_leaf},
                {"hidden", cfg.regressor.hidden},
                {"epochs", cfg.regressor.epochs},
                {"learning_rate", cfg.regressor.learning_rate}}}};
  j["dispatch"] = {{"kp", cfg.kp},
                   {"ki", cfg.ki},
                   {"freeze_rank_order", cfg.freeze_rank_order},
                   {"comfort_band", cfg.comfort_band}};
  json evs = json::array();
  for (const EventSpec& e : cfg.events)
    evs.push_back({{"start_minute", e.start_minute_of_day},
                   {"duration_min", e.duration_min},
                   {"direction", to_string(e.direction)},
                   {"amplitude_frac", e.amplitude_frac},
                   {"amplitude_kw", e.amplitude_kw},
                   {"half_period_min", e.half_period_min}});
  j["events"] = evs;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  cfg.n_houses = j.value("n_houses", cfg.n_houses);
  cfg.warmup_days = j.value("warmup_days", cfg.warmup_days);
  cfg.eval_days = j.value("eval_days", cfg.eval_days);
  cfg.window_days = j.value("window_days", cfg.window_days);
  cfg.history_order = j.value("history_order", cfg.history_order);
  cfg.noise_sigma = j.value("noise_sigma", cfg.noise_sigma);
  if (j.contains("setpoints")) {
    const json& s = j.at("setpoints");
    cfg.setpoints.base = s.value("base", cfg.setpoints.base);
    if (s.contains("profiles")) {
      const json& p = s.at("profiles");
      cfg.setpoints.profiles.clear();
      if (p.is_string()) {
        cfg.setpoints.profiles.push_back(p.get<std::string>());
      } else {
        for (const json& e : p) cfg.setpoints.profiles.push_back(e.get<std::string>());
      }
    }
    cfg.setpoints.step_offset = s.value("step_offset", cfg.setpoints.step_offset);
    cfg.setpoints.step_start_minute = s.value("step_start_minute", cfg.setpoints.step_start_minute);
    cfg.setpoints.step_end_minute = s.value("step_end_minute", cfg.setpoints.step_end_minute);
    cfg.setpoints.jitter_minutes = s.value("jitter_minutes", cfg.setpoints.jitter_minutes);
  }
  if (j.contains("weather")) {
    const json& w = j.at("weather");
    cfg.weather.t_min = w.value("t_min", cfg.weather.t_min);
    cfg.weather.t_max = w.value("t_max", cfg.weather.t_max);
    cfg.weather.noise_amplitude = w.value("noise_amplitude", cfg.weather.noise_amplitude);
  }
  cfg.design_outdoor = j.value("design_outdoor", cfg.design_outdoor);
  if (j.contains("fqi")) {
    const json& f = j.at("fqi");
    cfg.fqi_iterations = f.value("iterations", cfg.fqi_iterations);
    if (f.contains("regressor")) {
      const json& r = f.at("regressor");
      cfg.regressor.kind = r.value("kind", cfg.regressor.kind);
      cfg.regressor.n_trees = r.value("n_trees", cfg.regressor.n_trees);
      cfg.regressor.min_leaf = r.value("min_leaf", cfg.regressor.min_leaf);
      cfg.regressor.hidden = r.value("hidden", cfg.regressor.hidden);
      cfg.regressor.epochs = r.value("epochs", cfg.regressor.epochs);
      cfg.regressor.learning_rate = r.value("learning_rate", cfg.regressor.learning_rate);
    }
  }
  if (j.contains("dispatch")) {
    const json& d = j.at("dispatch");
    cfg.kp = d.value("kp", cfg.kp);
    cfg.ki = d.value("ki", cfg.ki);
    cfg.freeze_rank_order = d.value("freeze_rank_order", cfg.freeze_rank_order);
    cfg.comfort_band = d.value("comfort_band", cfg.comfort_band);
  }
  if (j.contains("events")) {
    cfg.events.clear();
    for (const json& e : j.at("events")) {
      EventSpec es;
      es.start_minute_of_day = e.value("start_minute", es.start_minute_of_day);
      es.duration_min = e.value("duration_min", es.duration_min);
      if (e.contains("direction")) es.direction = direction_from_string(e.at("direction").get<std::string>());
      es.amplitude_frac = e.value("amplitude_frac", es.amplitude_frac);
      es.amplitude_kw = e.value("amplitude_kw", es.amplitude_kw);
      es.half_period_min = e.value("half_period_min", es.half_period_min);
      cfg.events.push_back(es);
    }
  }
  return cfg;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

json read_json_file(const std::string& path) {
  json j = json::parse(read_text_file(path), nullptr, true, true);
  return j;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
  if (!out) throw ConfigError("short write to " + path);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void write_episode_row(CsvWriter& out, int house_id, int day_1based, int step,
                       const Transition& tr) {
  out.row({std::to_string(house_id), std::to_string(day_1based), std::to_string(step),
           std::to_string(tr.state.minute_of_day), fmt_g6(tr.state.outdoor_temp),
           fmt_g6(tr.state.room_temp()), fmt_g6(tr.setpoint), std::to_string(to_int(tr.action)),
           fmt_g6(tr.cost), tr.terminal ? "1" : "0"});
}

/// One day of pure thermostat operation at the 15-minute cadence, logged into
/// the experience buffers and the episode CSV.
void log_bau_day(ClusterSim& cluster, std::vector<ExperienceBuffer>& buffers,
                 CsvWriter& episodes) {
  const int n = cluster.size();
  const int day_1based = cluster.day() + 1;
  if (cluster.minute_of_day() != 0) throw ContractViolation("log_bau_day: clock not at midnight");
  for (int step = 0; step < kStepsPerDay; ++step) {
    std::vector<HouseholdState> before(static_cast<std::size_t>(n));
    std::vector<double> sps(static_cast<std::size_t>(n));
    for (int h = 0; h < n; ++h) {
      before[std::size_t(h)] = cluster.state(h);
      sps[std::size_t(h)] = cluster.setpoint(h);
    }
    const std::vector<Action> acts = cluster.bau_actions();
    const std::vector<double> energy = cluster.step_quarter(acts);
    for (int h = 0; h < n; ++h) {
      Transition tr{before[std::size_t(h)], sps[std::size_t(h)], acts[std::size_t(h)],
                    energy[std::size_t(h)], cluster.state(h), step + 1 == kStepsPerDay};
      buffers[std::size_t(h)].push_one(tr);
      write_episode_row(episodes, cluster.house(h).params.id, day_1based, step, tr);
    }
  }
}

struct EvalDayIo {
  CsvWriter& episodes;
  std::optional<CsvWriter>& traces_csv;
  std::optional<CsvWriter>& rank_csv;
  json& events_json;
  int& event_counter;
  const std::string& dir;
};

/// One evaluation day: thermostat operation except during events, per-minute
/// bookkeeping so the day still yields one quarter-hour transition per step.
void run_eval_day(ClusterSim& cluster, const ExperimentConfig& cfg,
                  const std::vector<SetpointSchedule>& schedules,
                  const std::vector<QFunction>& qfns, const std::vector<bool>& trained,
                  std::vector<ExperienceBuffer>& buffers, EvalDayIo io, RunArtifacts& out) {
  const int n = cluster.size();
  if (cluster.minute_of_day() != 0) throw ContractViolation("run_eval_day: clock not at midnight");
  const std::int64_t day_start = cluster.minute();
  const int day_1based = cluster.day() + 1;

  std::unordered_map<int, int> index_by_id;
  for (int h = 0; h < n; ++h) index_by_id[cluster.house(h).params.id] = h;
  const std::vector<double> powers = cluster.heater_powers();

  std::vector<std::vector<HouseholdState>> boundary(std::size_t(kStepsPerDay) + 1);
  std::vector<std::vector<Action>> minute_action(
      std::size_t(n), std::vector<Action>(std::size_t(kMinutesPerDay), Action::Off));
  std::vector<std::vector<double>> minute_energy(
      std::size_t(n), std::vector<double>(std::size_t(kMinutesPerDay), 0.0));

  auto capture = [&](const ClusterSim& c) {
    const std::int64_t rel = c.minute() - day_start;
    if (rel < 0 || rel % kQuarterMinutes != 0) return;
    const auto blk = std::size_t(rel / kQuarterMinutes);
    if (blk > std::size_t(kStepsPerDay) || !boundary[blk].empty()) return;
    boundary[blk].reserve(std::size_t(n));
    for (int h = 0; h < n; ++h) boundary[blk].push_back(c.state(h));
  };

  // Trailing thermostat-mode observations. Event signals sit on the mean of
  // the preceding hour instead of whatever switching instant the start minute
  // happens to hit, which would make the baseline a coin flip.
  std::vector<double> recent_kw, recent_cap_up, recent_cap_down;
  auto record_bau_minutes = [&](const std::vector<Action>& acts, int copies) {
    std::vector<double> temps(static_cast<std::size_t>(n)), sps(static_cast<std::size_t>(n));
    for (int h = 0; h < n; ++h) {
      temps[std::size_t(h)] = cluster.house(h).room_temp;
      sps[std::size_t(h)] = cluster.setpoint(h);
    }
    const double kw = aggregate_power(acts, powers);
    const double up =
        flexible_capacity(acts, temps, sps, powers, Direction::Up, cfg.comfort_band);
    const double down =
        flexible_capacity(acts, temps, sps, powers, Direction::Down, cfg.comfort_band);
    for (int i = 0; i < copies; ++i) {
      recent_kw.push_back(kw);
      recent_cap_up.push_back(up);
      recent_cap_down.push_back(down);
    }
  };
  auto trailing_mean = [](const std::vector<double>& v, double fallback) {
    if (v.empty()) return fallback;
    const std::size_t take = std::min<std::size_t>(60, v.size());
    double sum = 0.0;
    for (std::size_t i = v.size() - take; i < v.size(); ++i) sum += v[i];
    return sum / double(take);
  };

  auto advance_bau_to = [&](int stop_rel) {
    while (cluster.minute() - day_start < stop_rel) {
      capture(cluster);
      const int rel = int(cluster.minute() - day_start);
      const std::vector<Action> acts = cluster.bau_actions();
      if (rel % kQuarterMinutes == 0 && rel + kQuarterMinutes <= stop_rel) {
        record_bau_minutes(acts, kQuarterMinutes);
        const std::vector<double> e = cluster.step_quarter(acts);
        for (int h = 0; h < n; ++h) {
          for (int m = rel; m < rel + kQuarterMinutes; ++m)
            minute_action[std::size_t(h)][std::size_t(m)] = acts[std::size_t(h)];
          minute_energy[std::size_t(h)][std::size_t(rel)] = e[std::size_t(h)];
        }
      } else {
        record_bau_minutes(acts, 1);
        const std::vector<double> e = cluster.step_minute(acts);
        for (int h = 0; h < n; ++h) {
          minute_action[std::size_t(h)][std::size_t(rel)] = acts[std::size_t(h)];
          minute_energy[std::size_t(h)][std::size_t(rel)] = e[std::size_t(h)];
        }
      }
    }
  };

  AdvantageFn adv = [&](int h, const HouseholdState& s, double sp, Action u) {
    if (h < 0 || h >= n) throw DispatchError("advantage: house index out of range");
    if (!trained[std::size_t(h)]) return 0.0;
    return qfns[std::size_t(h)].advantage(s, sp, u);
  };

  std::vector<EventSpec> specs = cfg.events;
  std::sort(specs.begin(), specs.end(), [](const EventSpec& a, const EventSpec& b) {
    return a.start_minute_of_day < b.start_minute_of_day;
  });

  for (const EventSpec& es : specs) {
    advance_bau_to(es.start_minute_of_day);
    capture(cluster);

    const std::vector<Action> bau = cluster.bau_actions();
    std::vector<double> temps(static_cast<std::size_t>(n)), sps(static_cast<std::size_t>(n));
    for (int h = 0; h < n; ++h) {
      temps[std::size_t(h)] = cluster.house(h).room_temp;
      sps[std::size_t(h)] = cluster.setpoint(h);
    }
    const double capacity =
        flexible_capacity(bau, temps, sps, powers, es.direction, cfg.comfort_band);
    const double baseline = trailing_mean(recent_kw, aggregate_power(bau, powers));
    const double mean_capacity = trailing_mean(
        es.direction == Direction::Up ? recent_cap_up : recent_cap_down, capacity);
    const double amplitude =
        es.amplitude_kw >= 0.0 ? es.amplitude_kw : es.amplitude_frac * mean_capacity;

    const int id = ++io.event_counter;
    const DREvent ev = make_square_event(id, int(cluster.minute()), es.duration_min, es.direction,
                                         baseline, amplitude, es.half_period_min);
    DispatchOptions dopts;
    dopts.kp = cfg.kp;
    dopts.ki = cfg.ki;
    dopts.freeze_rank_order = cfg.freeze_rank_order;
    dopts.comfort_band = cfg.comfort_band;
    dopts.on_minute_start = capture;
    DispatchTrace trace = run_dr_event(cluster, adv, ev, dopts);

    for (const TraceRow& r : trace.rows) {
      const auto rel = std::size_t(r.minute - day_start);
      const int h = index_by_id.at(r.house_id);
      minute_action[std::size_t(h)][rel] = r.action;
      minute_energy[std::size_t(h)][rel] = r.energy_kwh;
    }

    if (!io.traces_csv)
      io.traces_csv.emplace(io.dir + "/" + kTracesCsv,
                            std::vector<std::string>{"event_id", "minute", "target_kw",
                                                     "achieved_kw", "house_id", "action",
                                                     "room_temp", "override"});
    append_trace_rows(*io.traces_csv, trace);
    if (!io.rank_csv)
      io.rank_csv.emplace(io.dir + "/" + kRankCsv,
                          std::vector<std::string>{"event_id", "house_id", "action",
                                                   "advantage_kwh", "rank"});
    for (const RankEntry& en : trace.ranks.entries)
      io.rank_csv->row({std::to_string(id), std::to_string(en.house_id), to_string(en.action),
                        fmt_g6(en.advantage_kwh), std::to_string(en.rank)});

    io.events_json.push_back({{"event_id", id},
                              {"day", day_1based},
                              {"start_minute", ev.start_minute},
                              {"start_minute_of_day", es.start_minute_of_day},
                              {"duration_min", es.duration_min},
                              {"direction", to_string(es.direction)},
                              {"baseline_kw", baseline},
                              {"capacity_kw", capacity},
                              {"mean_capacity_kw", mean_capacity},
                              {"amplitude_kw", amplitude}});
    out.traces.push_back(std::move(trace));
    out.events_executed += 1;
  }

  advance_bau_to(kMinutesPerDay);
  capture(cluster);

  for (int blk = 0; blk < kStepsPerDay; ++blk) {
    const auto b = std::size_t(blk);
    if (int(boundary[b].size()) != n || int(boundary[b + 1].size()) != n)
      throw ContractViolation("run_eval_day: missing quarter-hour boundary snapshot");
    for (int h = 0; h < n; ++h) {
      double e = 0.0;
      for (int m = blk * kQuarterMinutes; m < (blk + 1) * kQuarterMinutes; ++m)
        e += minute_energy[std::size_t(h)][std::size_t(m)];
      const Action a = minute_action[std::size_t(h)][std::size_t(blk * kQuarterMinutes)];
      const double sp = schedules[std::size_t(h)].at(blk * kQuarterMinutes);
      Transition tr{boundary[b][std::size_t(h)], sp, a, e, boundary[b + 1][std::size_t(h)],
                    blk + 1 == kStepsPerDay};
      buffers[std::size_t(h)].push_one(tr);
      write_episode_row(io.episodes, cluster.house(h).params.id, day_1based, blk, tr);
    }
  }
}

struct LoadedRun {
  json cluster;
  json events;
};

LoadedRun load_run_descriptor(const std::string& run_dir) {
  LoadedRun lr;
  lr.cluster = read_json_file(run_dir + "/" + kClusterJson);
  const std::string evp = run_dir + "/" + kEventsJson;
  lr.events = fs::exists(evp) ? read_json_file(evp) : json::array();
  return lr;
}

void write_summary(const std::string& run_dir, const json& cj, const json& ej,
                   const std::vector<DispatchTrace>& traces) {
  std::map<int, SetpointSchedule> schedule_by_id;
  std::map<int, double> band_by_id;
  const double band = cj.value("comfort_band", 1.0);
  for (const json& h : cj.at("houses")) {
    std::vector<std::pair<int, double>> bps;
    for (const json& bp : h.at("schedule")) bps.emplace_back(bp[0].get<int>(), bp[1].get<double>());
    schedule_by_id.emplace(h.at("id").get<int>(), SetpointSchedule(bps));
    band_by_id[h.at("id").get<int>()] = band;
  }

  std::map<int, json> event_meta;
  for (const json& e : ej) event_meta[e.at("event_id").get<int>()] = e;

  double max_excursion = 0.0;
  for (const DispatchTrace& t : traces)
    for (const TraceRow& r : t.rows) {
      const auto it = schedule_by_id.find(r.house_id);
      if (it == schedule_by_id.end()) continue;
      const double sp = it->second.at(int(r.minute % kMinutesPerDay));
      max_excursion = std::max(max_excursion, r.room_temp - (sp + band));
      max_excursion = std::max(max_excursion, (sp - band) - r.room_temp);
    }
  max_excursion = std::max(max_excursion, 0.0);

  std::ostringstream s;
  s << "flexgrid run summary\n";
  s << "seed: " << cj.value("seed", std::uint64_t(0)) << "\n";
  s << "houses: " << cj.value("n_houses", 0) << "\n";
  s << "days: " << cj.value("warmup_days", 0) << " warmup + " << cj.value("eval_days", 0)
    << " eval\n";
  s << "events executed: " << traces.size() << "\n";
  if (cj.contains("training_faults") && !cj.at("training_faults").empty()) {
    s << "training faults (house ids):";
    for (const json& f : cj.at("training_faults")) s << " " << f.get<int>();
    s << "\n";
  } else {
    s << "training faults: none\n";
  }
  if (traces.empty()) {
    s << "no dispatch events were executed; consolidated response not produced\n";
  } else {
    s << "max comfort excursion: " << fmt_g6(max_excursion) << " degC\n";
    for (const DispatchTrace& t : traces) {
      const double mae = t.mae_kw();
      s << "event " << t.event_id << ":";
      const auto it = event_meta.find(t.event_id);
      double amp = -1.0;
      if (it != event_meta.end()) {
        s << " day " << it->second.value("day", 0);
        amp = it->second.value("amplitude_kw", -1.0);
      }
      s << " " << to_string(t.direction);
      if (amp >= 0.0) s << " amplitude_kw=" << fmt_g6(amp);
      s << " mae_kw=" << fmt_g6(mae);
      if (amp > 0.0) s << " mae_frac=" << fmt_g6(mae / amp);
      s << " overrides=" << t.override_count() << "\n";
    }
  }
  write_text_file(run_dir + "/" + kSummaryTxt, s.str());
}

}  // namespace

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text, nullptr, true, true);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return config_from_json(j);
}

ExperimentConfig load_config_file(const std::string& path) {
  return config_from_json_text(read_text_file(path));
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  return config_to_json(cfg).dump(2) + "\n";
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.n_houses < 1) throw ConfigError("n_houses must be >= 1");
  if (cfg.warmup_days < 1) throw ConfigError("warmup_days must be >= 1");
  if (cfg.eval_days < 0) throw ConfigError("eval_days must be >= 0");
  if (cfg.window_days < 1) throw ConfigError("window_days must be >= 1");
  if (cfg.warmup_days < cfg.window_days)
    throw ConfigError("warmup_days must cover the experience window");
  if (cfg.history_order < 1) throw ConfigError("history_order must be >= 1");
  if (cfg.noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (cfg.setpoints.profiles.empty()) throw ConfigError("setpoints.profiles must not be empty");
  if (cfg.setpoints.profiles.size() != 1 &&
      int(cfg.setpoints.profiles.size()) != cfg.n_houses)
    throw ConfigError("setpoints.profiles must have one entry or one per house");
  for (const std::string& p : cfg.setpoints.profiles) profile_from_string(p);
  if (cfg.weather.t_min > cfg.weather.t_max) throw ConfigError("weather.t_min above t_max");
  if (cfg.fqi_iterations < 1) throw ConfigError("fqi.iterations must be >= 1");
  if (cfg.kp < 0.0 || cfg.ki < 0.0) throw ConfigError("dispatch gains must be >= 0");
  if (cfg.comfort_band <= 0.0) throw ConfigError("comfort_band must be positive");

  std::vector<EventSpec> evs = cfg.events;
  std::sort(evs.begin(), evs.end(), [](const EventSpec& a, const EventSpec& b) {
    return a.start_minute_of_day < b.start_minute_of_day;
  });
  int last_end = 0;
  for (const EventSpec& e : evs) {
    if (e.duration_min < 1) throw ConfigError("event duration_min must be >= 1");
    if (e.half_period_min < 1) throw ConfigError("event half_period_min must be >= 1");
    if (e.start_minute_of_day < 0 || e.start_minute_of_day + e.duration_min > kMinutesPerDay)
      throw ConfigError("event must fit inside one day");
    if (e.start_minute_of_day < last_end) throw ConfigError("events must not overlap");
    if (e.amplitude_kw < 0.0 && e.amplitude_frac <= 0.0)
      throw ConfigError("event needs amplitude_kw >= 0 or amplitude_frac > 0");
    last_end = e.start_minute_of_day + e.duration_min;
  }
}

ConsolidatedResponse consolidate(const std::vector<DispatchTrace>& traces) {
  if (traces.empty()) throw ConfigError("consolidate: no traces");
  const int dur = traces[0].duration_min;
  for (const DispatchTrace& t : traces)
    if (t.duration_min != dur) throw ConfigError("consolidate: traces differ in duration");

  // one (target, achieved) sample per event minute; house rows repeat them
  std::vector<std::vector<double>> targets(static_cast<std::size_t>(dur));
  std::vector<std::vector<double>> achieved(static_cast<std::size_t>(dur));
  for (const DispatchTrace& t : traces) {
    int seen_until = -1;
    for (const TraceRow& r : t.rows) {
      const int rel = int(r.minute) - t.start_minute;
      if (rel < 0 || rel >= dur) throw ContractViolation("consolidate: row outside event window");
      if (rel <= seen_until) continue;
      seen_until = rel;
      targets[std::size_t(rel)].push_back(r.target_kw);
      achieved[std::size_t(rel)].push_back(r.achieved_kw);
    }
  }

  ConsolidatedResponse c;
  for (int m = 0; m < dur; ++m) {
    const auto& a = achieved[std::size_t(m)];
    if (a.empty()) throw ContractViolation("consolidate: minute with no samples");
    c.rel_minute.push_back(m);
    c.target_kw.push_back(median_of(targets[std::size_t(m)]));
    c.median_kw.push_back(median_of(a));
    c.std_kw.push_back(population_std(a));
    c.event_count.push_back(int(a.size()));
  }
  return c;
}

void write_consolidated_csv(const ConsolidatedResponse& c, const std::string& path) {
  CsvWriter out(path, {"rel_minute", "target_kw", "median_kw", "std_kw", "event_count"});
  for (std::size_t i = 0; i < c.rel_minute.size(); ++i)
    out.row({std::to_string(c.rel_minute[i]), fmt_g6(c.target_kw[i]), fmt_g6(c.median_kw[i]),
             fmt_g6(c.std_kw[i]), std::to_string(c.event_count[i])});
  out.close();
}

std::vector<DispatchTrace> load_run_traces(const std::string& run_dir) {
  const LoadedRun lr = load_run_descriptor(run_dir);
  std::map<int, DispatchTrace> by_id;
  for (const json& e : lr.events) {
    DispatchTrace t;
    t.event_id = e.at("event_id").get<int>();
    t.direction = direction_from_string(e.at("direction").get<std::string>());
    t.start_minute = e.at("start_minute").get<int>();
    t.duration_min = e.at("duration_min").get<int>();
    by_id.emplace(t.event_id, std::move(t));
  }
  const std::string path = run_dir + "/" + kTracesCsv;
  if (fs::exists(path)) {
    const CsvTable table = read_csv(path);
    const auto ev = table.column("event_id");
    const auto minute = table.column("minute");
    const auto target = table.column("target_kw");
    const auto ach = table.column("achieved_kw");
    const auto house = table.column("house_id");
    const auto action = table.column("action");
    const auto room = table.column("room_temp");
    const auto ovr = table.column("override");
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
      TraceRow r;
      r.event_id = std::stoi(table.rows[i][ev]);
      r.minute = std::stoi(table.rows[i][minute]);
      r.target_kw = std::stod(table.rows[i][target]);
      r.achieved_kw = std::stod(table.rows[i][ach]);
      r.house_id = std::stoi(table.rows[i][house]);
      r.action = table.rows[i][action] == "ON" ? Action::On : Action::Off;
      r.room_temp = std::stod(table.rows[i][room]);
      r.overridden = table.rows[i][ovr] == "1";
      const auto it = by_id.find(r.event_id);
      if (it == by_id.end()) throw ConfigError("trace row for unknown event id");
      it->second.rows.push_back(r);
    }
  }
  std::vector<DispatchTrace> out;
  for (auto& [id, t] : by_id) out.push_back(std::move(t));
  return out;
}

ConsolidatedResponse consolidate_run(const std::string& run_dir) {
  return consolidate(load_run_traces(run_dir));
}

void emit_reports(const std::string& run_dir) {
  run_phase("report", [&] {
    const LoadedRun lr = load_run_descriptor(run_dir);
    const std::vector<DispatchTrace> traces = load_run_traces(run_dir);
    if (!traces.empty())
      write_consolidated_csv(consolidate(traces), run_dir + "/" + kConsolidatedCsv);

    HeatmapOptions ho;
    ho.history_order = lr.cluster.value("history_order", ho.history_order);
    const double outdoor = lr.cluster.value("heatmap_outdoor_c", 0.0);
    for (const json& h : lr.cluster.at("houses")) {
      if (!h.contains("model_file") || h.at("model_file").is_null()) continue;
      const QFunction q = QFunction::load_file(run_dir + "/" + h.at("model_file").get<std::string>());
      std::vector<std::pair<int, double>> bps;
      for (const json& bp : h.at("schedule"))
        bps.emplace_back(bp[0].get<int>(), bp[1].get<double>());
      const HeatmapGrid grid = advantage_heatmap(q, outdoor, SetpointSchedule(bps), ho);
      write_heatmap_csv(grid, run_dir + "/heatmap_" + std::to_string(h.at("id").get<int>()) +
                                  ".csv");
    }
    write_summary(run_dir, lr.cluster, lr.events, traces);
  });
}

void write_manifest(const std::string& run_dir, const ExperimentConfig& cfg) {
  json m;
  m["config"] = config_to_json(cfg);
  json arts = json::object();
  std::vector<std::string> rels;
  for (const auto& entry : fs::recursive_directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    std::string rel = entry.path().lexically_relative(run_dir).generic_string();
    if (rel == kManifestJson) continue;
    rels.push_back(std::move(rel));
  }
  std::sort(rels.begin(), rels.end());
  for (const std::string& rel : rels) {
    const std::string bytes = read_text_file(run_dir + "/" + rel);
    arts[rel] = hex64(fnv1a64(bytes.data(), bytes.size()));
  }
  m["artifacts"] = arts;
  write_text_file(run_dir + "/" + kManifestJson, m.dump(2) + "\n");
}

RunArtifacts run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  validate_config(cfg);
  fs::create_directories(fs::path(out_dir) / "models");

  RunArtifacts out;
  out.dir = out_dir;

  const int n = cfg.n_houses;
  const std::vector<SetpointProfile> profiles = resolve_profiles(cfg);
  SetpointOptions spo;
  spo.step_offset = cfg.setpoints.step_offset;
  spo.step_start_minute = cfg.setpoints.step_start_minute;
  spo.step_end_minute = cfg.setpoints.step_end_minute;
  spo.jitter_minutes = cfg.setpoints.jitter_minutes;

  std::vector<SetpointSchedule> schedules;
  double max_sp = cfg.setpoints.base;
  for (int h = 0; h < n; ++h) {
    schedules.push_back(make_setpoints(profiles[std::size_t(h)], cfg.setpoints.base,
                                       substream_seed(cfg.seed, "setpoints", std::uint64_t(h)),
                                       spo));
    max_sp = std::max(max_sp, schedules.back().max_setpoint());
  }

  const std::vector<ThermalParams> params =
      sample_cluster_params(cfg.seed, n, cfg.design_outdoor, max_sp);
  const int total_days = cfg.warmup_days + cfg.eval_days;
  // one spare day so the boundary snapshot at the final midnight stays in range
  const WeatherTrace weather = make_weather(substream_seed(cfg.seed, "weather"), total_days + 1,
                                            kQuarterMinutes, cfg.weather);

  std::vector<HouseSim> houses;
  for (int h = 0; h < n; ++h)
    houses.push_back(HouseSim{params[std::size_t(h)], cfg.setpoints.base, schedules[std::size_t(h)]});
  ClusterOptions copts;
  copts.history_order = cfg.history_order;
  copts.noise_sigma = cfg.noise_sigma;
  copts.noise_seed = substream_seed(cfg.seed, "noise");
  ClusterSim cluster(std::move(houses), &weather, copts);

  std::vector<ExperienceBuffer> buffers(std::size_t(n), ExperienceBuffer(cfg.window_days));
  CsvWriter episodes(out_dir + "/" + kEpisodesCsv,
                     {"house_id", "day", "step", "minute_of_day", "t_out", "t_room", "setpoint",
                      "action", "energy_kwh", "terminal"});

  run_phase("warmup", [&] {
    for (int d = 0; d < cfg.warmup_days; ++d) log_bau_day(cluster, buffers, episodes);
  });

  std::vector<QFunction> qfns(static_cast<std::size_t>(n));
  std::vector<bool> trained(std::size_t(n), false);
  std::vector<std::string> model_files(static_cast<std::size_t>(n));
  std::optional<CsvWriter> training_log;
  std::optional<CsvWriter> traces_csv;
  std::optional<CsvWriter> rank_csv;
  json events_json = json::array();
  int event_counter = 0;
  std::vector<int> fault_ids;

  for (int e = 0; e < cfg.eval_days; ++e) {
    const int day0 = cluster.day();  // completed days so far

    run_phase("train", [&] {
      if (!training_log)
        training_log.emplace(out_dir + "/" + kTrainingLogCsv,
                             std::vector<std::string>{"house_id", "date", "iteration",
                                                      "train_rmse"});
      for (int h = 0; h < n; ++h) {
        const int id = params[std::size_t(h)].id;
        FqiOptions fo;
        fo.iterations = cfg.fqi_iterations;
        fo.regressor = cfg.regressor;
        fo.seed = substream_seed(cfg.seed, "fqi", std::uint64_t(h) * 4096ULL + std::uint64_t(day0));
        try {
          QFunction q = fqi_fit(buffers[std::size_t(h)], schedules[std::size_t(h)], fo);
          q.meta().first_day = day0 - buffers[std::size_t(h)].completed_days() + 1;
          q.meta().last_day = day0;
          const std::string rel =
              "models/qfn_" + std::to_string(id) + "_day" + std::to_string(day0 + 1) + ".bin";
          q.save_file(out_dir + "/" + rel);
          model_files[std::size_t(h)] = rel;
          for (std::size_t i = 0; i < q.meta().train_rmse.size(); ++i)
            training_log->row({std::to_string(id), std::to_string(day0 + 1),
                               std::to_string(i + 1), fmt_g6(q.meta().train_rmse[i])});
          qfns[std::size_t(h)] = std::move(q);
          trained[std::size_t(h)] = true;
        } catch (const std::exception& ex) {
          // keep whatever model the house had; the run continues
          if (std::find(fault_ids.begin(), fault_ids.end(), id) == fault_ids.end())
            fault_ids.push_back(id);
          std::fprintf(stderr, "[phase:train] house %d day %d: %s\n", id, day0 + 1, ex.what());
        }
      }
    });

    run_phase("event", [&] {
      EvalDayIo io{episodes, traces_csv, rank_csv, events_json, event_counter, out_dir};
      run_eval_day(cluster, cfg, schedules, qfns, trained, buffers, io, out);
    });
  }

  episodes.close();
  if (training_log) training_log->close();
  if (traces_csv) traces_csv->close();
  if (rank_csv) rank_csv->close();
  out.training_faults = fault_ids;

  // run descriptor consumed by the report stage and by standalone re-reports
  json cj;
  cj["seed"] = cfg.seed;
  cj["n_houses"] = n;
  cj["warmup_days"] = cfg.warmup_days;
  cj["eval_days"] = cfg.eval_days;
  cj["window_days"] = cfg.window_days;
  cj["history_order"] = cfg.history_order;
  cj["noise_sigma"] = cfg.noise_sigma;
  cj["comfort_band"] = cfg.comfort_band;
  cj["heatmap_outdoor_c"] =
      weather.at_minute(std::int64_t(total_days - 1) * kMinutesPerDay + 12 * 60);
  json houses_json = json::array();
  for (int h = 0; h < n; ++h) {
    json hj;
    hj["id"] = params[std::size_t(h)].id;
    hj["resistance_k_per_kw"] = params[std::size_t(h)].resistance_k_per_kw;
    hj["capacitance_kwh_per_k"] = params[std::size_t(h)].capacitance_kwh_per_k;
    hj["heater_kw"] = params[std::size_t(h)].heater_kw;
    hj["profile"] = profile_to_string(profiles[std::size_t(h)]);
    json bps = json::array();
    for (const auto& [m, t] : schedules[std::size_t(h)].breakpoints()) bps.push_back({m, t});
    hj["schedule"] = bps;
    if (model_files[std::size_t(h)].empty())
      hj["model_file"] = nullptr;
    else
      hj["model_file"] = model_files[std::size_t(h)];
    houses_json.push_back(hj);
  }
  cj["houses"] = houses_json;
  cj["training_faults"] = fault_ids;
  write_text_file(out_dir + "/" + kClusterJson, cj.dump(2) + "\n");
  write_text_file(out_dir + "/" + kEventsJson, events_json.dump(2) + "\n");

  emit_reports(out_dir);
  write_manifest(out_dir, cfg);
  return out;
}

}  // namespace flexgrid
