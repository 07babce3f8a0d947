#pragma once

#include "iscc/array_model.hpp"
#include "iscc/types.hpp"

namespace iscc {

// Concave quadratic minorant of the echo-power objective of one target,
// expanded at a reference waveform:
//   value(x) = -||G^H x||^2 + 2 Re{m^H x} + c0,
// touching the true objective at the reference and lying below it
// everywhere. U and lam cache the eigenstructure of G G^H for the
// constraint projection.
struct SurrogateData {
  VecC m;
  MatC factors;  // G, one column per clutter patch
  double constant = 0.0;
  double value_ref = 0.0;  // objective at the expansion point

  MatC basis;  // orthonormal columns spanning range(G)
  VecR lam;    // matching eigenvalues of G G^H
};

SurrogateData build_surrogate(const Waveform& ref, const TargetSpec& target,
                              const SystemConfig& cfg);

// Same expansion with the look angle overridden (the covariance keeps the
// target's own clutter, which does not depend on the look angle).
SurrogateData build_surrogate_at(const Waveform& ref, const TargetSpec& target,
                                 const SystemConfig& cfg, double angle);

double surrogate_value(const SurrogateData& s, const VecC& x);

// Projection onto {(x, xi): value(x) + xi >= 0}; returns the applied
// multiplier (0 when already feasible).
double project_surrogate_epigraph(const SurrogateData& s, VecC& x, double& xi);

}  // namespace iscc
