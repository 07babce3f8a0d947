#pragma once

#include <vector>

#include "iscc/array_model.hpp"
#include "iscc/types.hpp"

namespace iscc {

// Worst-case-normalized echo power of one target against its own clutter:
// x^H A^H R^{-1} A x with R the clutter-plus-noise covariance scaled by the
// target's reflection power.
double scnr(const Waveform& x, const TargetSpec& target,
            const SystemConfig& cfg);

double detection_probability(double scnr_value, double p_fa);

// Decision margin of one received PSK symbol: distance-to-sector measure
// Re{w} - |Im{w}|*cot(pi/m) with w = h^H x_l * conj(s).
double psk_safety_margin(const VecC& x_slot, const VecC& h, cxd symbol, int m);

// Union bound on the symbol error probability from the margin, capped at 1.
double psk_sep_bound(double margin, double noise_power, int m);

// Rotated-symbol pair whose two half-plane margins express the sector
// condition: margin >= mu on both is the PSK error constraint.
struct RotatedPair {
  cxd tilt;  // conj(s) * (sin + j cos)
  cxd bar;   // conj(s) * (sin - j cos)
};
RotatedPair psk_rotated_pair(cxd symbol, int m);

// Per-user margin threshold from an error ceiling, or from an SNR target.
double qos_threshold_psk(double epsilon, double noise_power, int m);
double qos_threshold_psk_snr(double gamma, double noise_power, int m);

enum class BeampatternMode { TxPower, EchoScnr };

struct BeampatternPoint {
  double angle = 0.0;
  double value = 0.0;
};

// TxPower: mean per-slot radiated power toward each probe angle.
// EchoScnr: scnr of a unit-reflectivity probe target at each angle, against
// the union of all clutter patches in the scene.
std::vector<BeampatternPoint> beampattern(const Waveform& x,
                                          const std::vector<double>& angles,
                                          const SystemConfig& cfg,
                                          const Scene& scene,
                                          BeampatternMode mode);

// Mean squared mismatch between the shaped echo direction and the scaled
// reference sequence for target k.
double noise_shaping_residual(const Waveform& x, const TargetSpec& target,
                              const NoiseShapingAux& aux, int k,
                              const SystemConfig& cfg);

struct HistogramBox {
  double half_width = 1.0;  // symmetric square around the origin
};

// Square support box covering the pooled samples up to the given quantile of
// |z|; samples outside fall into edge bins.
HistogramBox jsd_support_box(const std::vector<cxd>& a,
                             const std::vector<cxd>& b,
                             double quantile = 0.995);

// Jensen-Shannon divergence between two complex sample clouds via smoothed
// 2-D histograms on a common box; natural log, so the range is [0, ln 2].
double js_divergence(const std::vector<cxd>& a, const std::vector<cxd>& b,
                     int bins, const HistogramBox& box);
double js_divergence(const std::vector<cxd>& a, const std::vector<cxd>& b,
                     int bins = 32);

}  // namespace iscc
