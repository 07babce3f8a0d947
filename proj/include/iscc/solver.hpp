#pragma once

#include <map>
#include <string>
#include <vector>

#include "iscc/array_model.hpp"
#include "iscc/metrics.hpp"
#include "iscc/pda.hpp"
#include "iscc/types.hpp"

namespace iscc {

// Unit-modulus rotations of a PSK frame whose two half-plane margins encode
// the sector error constraint.
struct RotatedSymbols {
  MatC tilt;  // conj(s) * (sin(pi/M) + j cos(pi/M))
  MatC bar;   // conj(s) * (sin(pi/M) - j cos(pi/M))
};
RotatedSymbols rotate_symbols(const MatC& symbols, int m);

struct IsccProblem {
  SystemConfig cfg;
  Scene scene;
  UserChannelSet channels;
  Constellation constellation;
  SymbolFrame frame;
  NoiseShapingAux aux;  // reference and tolerance in; scale comes back in d
  QosSpec qos;
  UncertaintyModel uncertainty;

  double user_noise(int k) const { return scene.users[k].noise_power; }
};

struct SolverOptions {
  // anchored inner solves keep the outer iterates from wandering along flat
  // optimal manifolds, where the plain averaged step is only neutrally stable
  PdaOptions pda = {.anchor_damping = 0.02};
  double mm_rel_tol = 1e-4;
  double mm_step_tol = 1e-3;  // iterate step, relative to sqrt(power)
  int mm_max_outer = 100;
  int polish_passes = 120;
  bool warm_rho = true;       // later outers reuse the reached penalty level
  int validation_grid_factor = 10;
};

struct SolveReport {
  bool converged = false;
  bool feasible = false;
  bool infeasible = false;
  int outer_iters = 0;
  long long inner_iters_total = 0;
  double wall_ms = 0.0;
  double min_scnr = 0.0;
  std::vector<double> objective_trace;  // worst-case scnr per outer iterate
  std::vector<double> step_trace;       // ||x^t - x^{t-1}|| per outer
  std::map<std::string, double> residuals;
  std::vector<PdaTraceRow> inner_trace;
  double grid_min_scnr = 0.0;       // robust: worst over the solver grid
  double fine_grid_min_scnr = 0.0;  // robust: worst over the validation grid
  std::string notes;
};

struct SolveOutput {
  Waveform waveform;
  VecC d;    // shaping scales per target (zero for the plain precoder)
  VecR tau;  // QAM: [re, im] half-spacings per user
  VecR r;    // robust: per-slot norm slacks
  SolveReport report;
};

SolveOutput solve_iscc_psk(const IsccProblem& pb, const SolverOptions& opts = {});
SolveOutput solve_iscc_qam(const IsccProblem& pb, const SolverOptions& opts = {});
SolveOutput solve_robust_psk(const IsccProblem& pb, const SolverOptions& opts = {});
SolveOutput solve_robust_qam(const IsccProblem& pb, const SolverOptions& opts = {});

// Same pipeline without the shaping constraints (plain symbol-level design).
SolveOutput slp_baseline(const IsccProblem& pb, const SolverOptions& opts = {});

}  // namespace iscc
