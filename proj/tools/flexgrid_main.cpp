#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "flexgrid/exact_oracle.hpp"
#include "flexgrid/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"flexgrid: thermostat-cluster demand response testbed"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string run_dir;
  std::uint64_t oracle_seed = 1;
  int oracle_count = 50;

  CLI::App* run = app.add_subcommand("run", "run the full experiment");
  run->add_option("--config", config_path, "JSON config file; defaults apply when omitted");
  run->add_option("--out", out_dir, "output directory")->required();

  CLI::App* report = app.add_subcommand("report", "rebuild derived reports for a finished run");
  report->add_option("--run", run_dir, "run directory")->required();

  CLI::App* consolidate =
      app.add_subcommand("consolidate", "rewrite the consolidated response curve");
  consolidate->add_option("--run", run_dir, "run directory")->required();

  CLI::App* oracle = app.add_subcommand("oracle-check", "measure the dispatch optimality gap");
  oracle->add_option("--seed", oracle_seed, "instance seed");
  oracle->add_option("--count", oracle_count, "number of instances");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      flexgrid::ExperimentConfig cfg;
      if (!config_path.empty()) cfg = flexgrid::load_config_file(config_path);
      const flexgrid::RunArtifacts arts = flexgrid::run_experiment(cfg, out_dir);
      std::printf("run complete: %d events, artifacts in %s\n", arts.events_executed,
                  arts.dir.c_str());
      for (int id : arts.training_faults)
        std::fprintf(stderr, "warning: training fault for house %d\n", id);
    } else if (report->parsed()) {
      flexgrid::emit_reports(run_dir);
      std::printf("reports rebuilt in %s\n", run_dir.c_str());
    } else if (consolidate->parsed()) {
      const flexgrid::ConsolidatedResponse c = flexgrid::consolidate_run(run_dir);
      flexgrid::write_consolidated_csv(c, run_dir + "/consolidated_response.csv");
      std::printf("consolidated %zu minutes across the run's events\n", c.rel_minute.size());
    } else if (oracle->parsed()) {
      const auto gaps = flexgrid::measure_optimality_gap(oracle_seed, oracle_count);
      bool ok = true;
      double worst_ratio = 0.0;
      for (const auto& g : gaps) {
        std::printf("instance %d: oracle=%.6g heuristic=%.6g%s\n", g.instance_id,
                    g.oracle_objective, g.heuristic_objective,
                    g.target_is_bau ? " (bau target)" : "");
        if (g.target_is_bau) {
          if (g.heuristic_objective != 0.0) ok = false;
        } else {
          if (g.heuristic_objective > 1.3 * g.oracle_objective + 1e-6) ok = false;
          if (g.oracle_objective > 0.0)
            worst_ratio = std::max(worst_ratio, g.heuristic_objective / g.oracle_objective);
        }
      }
      std::printf("worst heuristic/oracle ratio: %.4f\n", worst_ratio);
      std::printf("within 1.3x bound: %s\n", ok ? "yes" : "no");
      if (!ok) return 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "flexgrid: %s\n", e.what());
    return 1;
  }
  return 0;
}
