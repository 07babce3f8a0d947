#include <cstdint>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "iscc/harness.hpp"
#include "iscc/scene_io.hpp"
#include "support/oracle_suite.hpp"

namespace {

iscc::ExperimentPlan load_or_default(const std::string& config) {
  if (config.empty()) return iscc::default_plan();
  return iscc::load_plan(config);
}

int run_plan(const std::string& config, const std::string& out,
             bool solve_only, bool first_point_only) {
  iscc::ExperimentPlan plan = load_or_default(config);
  if (solve_only) plan.trials = 0;
  if (first_point_only && plan.sweep_values.size() > 1)
    plan.sweep_values.resize(1);
  iscc::EvalResult result = iscc::run_experiment(plan, out);
  std::cout << "wrote " << result.rows.size() << " metric rows to " << out
            << "\n";
  for (const iscc::MetricsRow& row : result.rows) {
    std::cout << "  point=" << row.point << " method=" << row.method
              << " min_scnr=" << row.min_scnr;
    if (row.ser_user.trials > 0)
      std::cout << " ser_user=" << row.ser_user.mean
                << " ser_eve_min=" << row.ser_eve_min << " jsd=" << row.jsd;
    std::cout << (row.feasible ? "" : " [infeasible]") << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"waveform design and evaluation for joint radar sensing and "
               "covert multiuser communication"};
  app.require_subcommand(1);

  std::string config, out = "out";

  CLI::App* solve = app.add_subcommand(
      "solve", "run the waveform solves only, no Monte-Carlo evaluation");
  solve->add_option("--config", config, "plan JSON file (default desk scene)");
  solve->add_option("--out", out, "output directory");

  CLI::App* eval = app.add_subcommand(
      "eval", "solve and evaluate the first sweep point");
  eval->add_option("--config", config, "plan JSON file (default desk scene)");
  eval->add_option("--out", out, "output directory");

  CLI::App* sweep = app.add_subcommand(
      "sweep", "solve and evaluate every sweep point");
  sweep->add_option("--config", config, "plan JSON file (default desk scene)");
  sweep->add_option("--out", out, "output directory");

  std::string suite = "projections";
  std::uint64_t oracle_seed = 7;
  int oracle_instances = 120;
  CLI::App* oracle = app.add_subcommand(
      "oracle", "validate closed-form projections against reference oracles");
  oracle->add_option("--suite", suite, "suite name (projections)");
  oracle->add_option("--seed", oracle_seed, "suite RNG seed");
  oracle->add_option("--instances", oracle_instances,
                     "random instances per family");

  CLI11_PARSE(app, argc, argv);

  try {
    if (solve->parsed()) return run_plan(config, out, true, false);
    if (eval->parsed()) return run_plan(config, out, false, true);
    if (sweep->parsed()) return run_plan(config, out, false, false);
    if (oracle->parsed()) {
      if (suite != "projections") {
        std::cerr << "unknown suite: " << suite << "\n";
        return 2;
      }
      iscc::oracle::SuiteResult result = iscc::oracle::run_projection_suite(
          oracle_seed, oracle_instances, &std::cout);
      std::cout << (result.pass ? "suite passed" : "suite FAILED") << " in "
                << result.wall_s << " s\n";
      return result.pass ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
