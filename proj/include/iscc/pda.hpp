#pragma once

#include <functional>
#include <string>
#include <vector>

#include "iscc/types.hpp"

namespace iscc {

// One iterate of the constrained search. Components not used by a given
// problem stay at size zero; every projection returns the same shapes it was
// given. xi is the epigraph variable the engine minimizes.
struct DecisionPoint {
  VecC x;        // stacked waveform
  VecC d;        // per-target shaping scales
  VecC upsilon;  // received proxies, slot-major: entry l*K+k is user k, slot l
  VecR tau;      // per-user box half-spacings, [re, im] pairs
  VecR r;        // per-slot norm slacks
  double xi = 0.0;

  static DecisionPoint zeros_like(const DecisionPoint& p);
  void setZero();
  void add_scaled(const DecisionPoint& p, double w);  // this += w * p
  double squared_distance(const DecisionPoint& o) const;
  double norm(const DecisionPoint& o) const;  // ||this - o||
};

// y + zeta * (y - y_prev)
DecisionPoint extrapolate(const DecisionPoint& y, const DecisionPoint& y_prev,
                          double zeta);

// A closed convex constraint set with its metric projection. residual
// reports the Euclidean distance to the set; when not supplied the engine
// measures it through project.
struct ProjectionSet {
  std::string label;
  std::function<void(DecisionPoint&)> project;  // in place
  std::function<double(const DecisionPoint&)> residual;

  double distance(const DecisionPoint& p) const;
};

struct PenaltySchedule {
  double rho_init = 1.0;
  double growth = 1.5;
  int period = 10;
  double rho_max = 1e6;
};

struct PdaOptions {
  PenaltySchedule schedule;
  bool accelerate = true;
  double accel_delay = 3.0;  // zeta_k = (k-1)/(k+accel_delay)
  int max_iters = 5000;
  double residual_tol = 1e-5;
  double step_tol = 1e-6;
  // Weight of a quadratic pull toward the starting point, relative to rho.
  // Breaks the neutral drift along flat solution manifolds without touching
  // the attained objective level; 0 turns it off.
  double anchor_damping = 0.0;
};

struct PdaTraceRow {
  int iter = 0;
  double xi = 0.0;
  double rho = 0.0;
  double max_residual = 0.0;
  double step_norm = 0.0;
};

struct PdaResult {
  DecisionPoint point;
  bool converged = false;
  int iters = 0;
  double rho_final = 0.0;
  double max_residual = 0.0;
  std::vector<PdaTraceRow> trace;
};

// xi + (rho / 2N) * sum of squared set distances.
double penalized_objective(const DecisionPoint& p,
                           const std::vector<ProjectionSet>& sets, double rho);

// One averaged-projection step followed by the epigraph pull xi -= 1/rho.
// With an anchor, every coordinate except xi is then blended toward it with
// weight beta/(1+beta); this is the proximal map of (beta rho / 2)||.-a||^2.
DecisionPoint pda_step(const DecisionPoint& p,
                       const std::vector<ProjectionSet>& sets, double rho,
                       const DecisionPoint* anchor = nullptr,
                       double beta = 0.0);

PdaResult pda_solve(const DecisionPoint& init,
                    const std::vector<ProjectionSet>& sets,
                    const PdaOptions& opts);

}  // namespace iscc
