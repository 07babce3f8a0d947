#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "iscc/rng.hpp"
#include "iscc/scene_io.hpp"
#include "iscc/solver.hpp"
#include "iscc/stats.hpp"
#include "iscc/types.hpp"

namespace iscc {

// Per-block beamforming baseline: zero-forcing beams carry the data with the
// receive amplitude picked from the QoS target. Leftover power is aimed at
// the targets through the nullspace of the user channels; it rides the first
// data stream, so the strong sensing echo is symbol modulated like the rest
// of the transmission. Without users it becomes a plain constant beam.
struct BfPrecoder {
  MatC user_columns;  // n_tx x n_users, already scaled
  VecC radar;         // constant beam, used only when there are no users
  VecR rx_scale;      // receive amplitude per user
  double per_slot_power = 0.0;
  bool infeasible = false;
};

BfPrecoder bf_baseline(const IsccProblem& pb);
Waveform bf_transmit(const BfPrecoder& prec, const MatC& symbols);

// What the evaluation side needs from one solved method at one sweep point.
struct MethodSolution {
  std::string method;
  Waveform waveform;
  VecR tau;       // QAM grid half spacing, axis pairs per user
  VecR rx_scale;  // bf receive amplitudes; empty otherwise
  VecC d;         // shaping scales (fitted for slp)
  SolveReport report;
};

struct SerEstimate {
  long long errors = 0;
  long long trials = 0;
  double mean = 0.0;
  ConfidenceInterval ci{0.0, 1.0};
};

struct EveEstimate {
  std::vector<SerEstimate> per_target;
  int best_target = 0;  // minimum SER over targets
  double min_ser = 1.0;
};

IsccProblem make_problem(const ExperimentPlan& plan, std::uint64_t seed,
                         int point_index);
MethodSolution solve_method(const std::string& method,
                            const ExperimentPlan& plan, const IsccProblem& pb);

// Fresh-noise symbol decisions pooled over users; the transmitted frame is
// reused unless the plan asks for a re-solve per frame.
SerEstimate monte_carlo_ser(const MethodSolution& sol, const IsccProblem& pb,
                            long long trials, RngStream& rng);

EveEstimate eavesdropper_eval(const MethodSolution& sol, const IsccProblem& pb,
                              double eve_noise_power, long long trials,
                              RngStream& rng);

// Receive samples for constellation dumps and divergence metrics.  User
// samples are pooled across users after a per-user least-squares equalizer;
// eve samples observe one target, equalized against user 0's stream when
// asked.
std::vector<cxd> user_samples(const MethodSolution& sol, const IsccProblem& pb,
                              int frame_passes, RngStream& rng);
std::vector<cxd> eve_samples(const MethodSolution& sol, const IsccProblem& pb,
                             int target, double noise_power, int frame_passes,
                             RngStream& rng, bool equalized);

// Divergence between the sample cloud and a circular Gaussian fitted to it.
double jsd_vs_fitted_gaussian(const std::vector<cxd>& samples, RngStream& rng,
                              int bins = 32);

std::uint64_t frame_hash(const SymbolFrame& frame);

struct MetricsRow {
  double point = 0.0;
  std::string method;
  double min_scnr = 0.0;
  SerEstimate ser_user;
  double ser_eve_min = 1.0;
  double jsd = 0.0;
  double solve_ms = 0.0;
  std::uint64_t frame_digest = 0;
  bool feasible = false;
};

struct EvalResult {
  std::vector<MetricsRow> rows;
};

// Solve + evaluate every (sweep point, method) pair with paired seeds and
// write metrics.csv, beampattern.csv, constellation and trace files plus a
// manifest that makes re-runs skip completed work.
EvalResult run_experiment(const ExperimentPlan& plan,
                          const std::string& out_dir);

}  // namespace iscc
