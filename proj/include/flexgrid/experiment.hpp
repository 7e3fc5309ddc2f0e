#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flexgrid/dispatch.hpp"
#include "flexgrid/qfunction.hpp"
#include "flexgrid/setpoints.hpp"
#include "flexgrid/weather.hpp"

namespace flexgrid {

/// One tracking event template, re-issued on every evaluation day.
struct EventSpec {
  int start_minute_of_day = 600;
  int duration_min = 40;
  Direction direction = Direction::Up;
  /// Amplitude as a fraction of the flexible capacity measured at event start.
  double amplitude_frac = 0.5;
  /// Absolute amplitude in kW; takes precedence over amplitude_frac when >= 0.
  double amplitude_kw = -1.0;
  int half_period_min = 10;
};

struct SetpointConfig {
  double base = 20.0;
  /// "flat" or "evening_step", one entry per house; a single entry is
  /// broadcast to the whole cluster.
  std::vector<std::string> profiles = {"flat"};
  double step_offset = 1.5;
  int step_start_minute = 1020;
  int step_end_minute = 1320;
  int jitter_minutes = 0;
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  int n_houses = 8;
  int warmup_days = 30;
  int eval_days = 10;
  int window_days = 30;
  int history_order = 4;
  double noise_sigma = 0.03;  // degC per quarter-hour step
  SetpointConfig setpoints;
  WeatherOptions weather;
  double design_outdoor = -5.0;  // heater sizing point
  int fqi_iterations = 20;
  RegressorConfig regressor;
  double kp = 0.6;
  double ki = 0.15;
  bool freeze_rank_order = true;
  double comfort_band = 1.0;
  std::vector<EventSpec> events = {EventSpec{600}, EventSpec{900}};
};

/// Parses a JSON config file; absent keys keep their defaults.
ExperimentConfig load_config_file(const std::string& path);
ExperimentConfig config_from_json_text(const std::string& text);
std::string config_to_json_text(const ExperimentConfig& cfg);
void validate_config(const ExperimentConfig& cfg);

/// Median response across the repetitions of the same event template.
struct ConsolidatedResponse {
  std::vector<int> rel_minute;
  std::vector<double> target_kw;  // per-minute median target
  std::vector<double> median_kw;
  std::vector<double> std_kw;  // population std of achieved power
  std::vector<int> event_count;
};

ConsolidatedResponse consolidate(const std::vector<DispatchTrace>& traces);
void write_consolidated_csv(const ConsolidatedResponse& c, const std::string& path);

struct RunArtifacts {
  std::string dir;
  int events_executed = 0;
  std::vector<DispatchTrace> traces;
  std::vector<int> training_faults;  // house ids whose retrain failed at least once
};

/// Runs the full experiment (warmup logging, daily retraining, events,
/// reports, manifest) and leaves every artifact under out_dir.
RunArtifacts run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

/// Reads the dispatch traces back from a finished run directory.
std::vector<DispatchTrace> load_run_traces(const std::string& run_dir);

/// Rebuilds the derived artifacts (consolidated curve, heatmaps, summary)
/// from the raw files of a finished run.
void emit_reports(const std::string& run_dir);

/// Consolidated curve straight from a run directory.
ConsolidatedResponse consolidate_run(const std::string& run_dir);

/// FNV-1a content hashes of every artifact, keyed by path relative to the run
/// directory; the manifest itself is excluded.
void write_manifest(const std::string& run_dir, const ExperimentConfig& cfg);

}  // namespace flexgrid
