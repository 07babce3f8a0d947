#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "iscc/pda.hpp"
#include "iscc/solver.hpp"
#include "iscc/types.hpp"

#include <json.hpp>

namespace iscc {

// One experiment description: scene, waveform constraints, what to sweep and
// how to evaluate it.  Loaded from JSON, with desk-scale defaults filled in
// for anything missing.
struct ExperimentPlan {
  SystemConfig cfg;
  Scene scene;
  Constellation constellation = Constellation::psk(4);
  QosSpec qos;
  double delta = 0.1;  // shaping tolerance shared by all targets
  UncertaintyModel uncertainty;
  bool robust = false;
  std::string sweep_variable;  // gamma_db|epsilon|delta|n_tx|eps_user|eps_target
  std::vector<double> sweep_values;
  std::vector<std::string> methods{"iscc", "slp", "bf"};
  long long trials = 100000;
  std::uint64_t seed = 1u;
  int constellation_frames = 64;
  bool solve_per_frame = false;
  double eve_noise_power = 1.0;
  SolverOptions solver;

  // effective values for one sweep point; index ignored when no sweep is set
  ExperimentPlan at_point(std::size_t index) const;
  std::size_t n_points() const { return sweep_values.empty() ? 1 : sweep_values.size(); }
  double point_value(std::size_t index) const;
};

ExperimentPlan default_plan(bool paper_scale = false);
ExperimentPlan plan_from_json(const nlohmann::json& j);
ExperimentPlan load_plan(const std::string& path);
nlohmann::json plan_to_json(const ExperimentPlan& plan);

nlohmann::json report_to_json(const SolveReport& report,
                              const VecR* tau = nullptr);

// shortest round-trip decimal form, independent of the global locale
std::string format_double(double v);

void write_trace_csv(std::ostream& os, const std::vector<PdaTraceRow>& trace);

}  // namespace iscc
