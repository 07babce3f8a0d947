#pragma once

#include <Eigen/Cholesky>

#include "iscc/rng.hpp"
#include "iscc/types.hpp"

namespace iscc {

// Unit-norm ULA steering vector, entry i = exp(j*2*pi*spacing*i*sin(angle))/sqrt(n).
VecC steering_vector(double angle, int n, double spacing_ratio = 0.5);

// Rank-one echo operator for one scatterer, applied per symbol slot:
// y_l = a_rx * (a_tx^H x_l). Equivalent to the dense block-diagonal matrix
// kron(I_L, a_rx a_tx^H) on the stacked waveform.
struct SteeringMatrix {
  VecC a_rx;
  VecC a_tx;
  int frame_len = 0;

  // slots: n_tx x L in, n_rx x L out
  MatC apply(const MatC& slots) const;
  MatC apply_adjoint(const MatC& received) const;
  double frob_sq() const { return static_cast<double>(frame_len); }
  MatC dense() const;  // (n_rx*L) x (n_tx*L), small cases only
};

SteeringMatrix steering_matrix(double angle, const SystemConfig& cfg);

// Echo interference covariance for one target, normalized by the target's
// reflection power: R = base*I + F F^H with F holding the scaled clutter
// echoes of the current waveform. Inversion goes through the low-rank
// identity, so solve() costs O(n_rx*L*C) after setup.
struct ClutterCovariance {
  double base = 1.0;  // sigma0^2 / rcs
  MatC factors;       // (n_rx*L) x C
  Eigen::LLT<MatC> small_llt;  // of base*I_C + F^H F

  VecC solve(const VecC& b) const;
  MatC solve(const MatC& b) const;
  MatC dense() const;
};

ClutterCovariance interference_covariance(const Waveform& x,
                                          const TargetSpec& target,
                                          const SystemConfig& cfg);

Constellation make_constellation(ConstellationKind kind, int order);

// Rician fading with an array-steered dominant path; E||h||^2 = n_tx.
UserChannelSet sample_rician_channels(const Scene& scene,
                                      const SystemConfig& cfg,
                                      RngStream& rng);

SymbolFrame draw_symbol_frame(const Constellation& cst, int n_users,
                              int frame_len, RngStream& rng);

// Unit-variance circular Gaussian reference sequences, one row per target.
MatC draw_noise_reference(int n_targets, int frame_len, RngStream& rng);

}  // namespace iscc
