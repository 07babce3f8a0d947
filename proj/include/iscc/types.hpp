#pragma once

#include <Eigen/Dense>
#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace iscc {

using cxd = std::complex<double>;
using VecC = Eigen::VectorXcd;
using VecR = Eigen::VectorXd;
using MatC = Eigen::MatrixXcd;
using MatR = Eigen::MatrixXd;

constexpr double kPi = 3.14159265358979323846;

inline double deg2rad(double d) { return d * kPi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / kPi; }

struct SystemConfig {
  int n_tx = 8;
  int n_rx = 8;
  int frame_len = 16;
  double power = 160.0;
  double spacing_ratio = 0.5;   // element spacing over wavelength
  double rx_noise_power = 1.0;  // radar receiver noise floor
};

struct ClutterPatch {
  double angle = 0.0;  // radians
  double power = 1.0;
};

struct TargetSpec {
  double angle = 0.0;  // radians
  double rcs = 1.0;    // mean reflection power
  std::vector<ClutterPatch> clutter;
};

struct UserSpec {
  double angle = 0.0;  // dominant path, radians
  double rician_factor = 3.0;
  int n_paths = 8;
  double noise_power = 1.0;
};

struct Scene {
  std::vector<TargetSpec> targets;
  std::vector<UserSpec> users;
};

enum class ConstellationKind { Psk, Qam };

// PSK of the given order, or square QAM with 4*order^2 points on the odd
// integer grid {±1, ±3, ..., ±(2*order−1)} per axis.
struct Constellation {
  ConstellationKind kind = ConstellationKind::Psk;
  int order = 4;
  std::vector<cxd> points;

  static Constellation psk(int m);
  static Constellation qam(int m);
  int size() const { return static_cast<int>(points.size()); }
  double mean_energy() const;
};

// CPI waveform: stacked per-symbol transmit vectors, column l = x_l.
struct Waveform {
  MatC slots;  // n_tx x frame_len

  int n_tx() const { return static_cast<int>(slots.rows()); }
  int frame_len() const { return static_cast<int>(slots.cols()); }
  double total_power() const { return slots.squaredNorm(); }
  VecC stacked() const;
  static Waveform from_stacked(const VecC& x, int n_tx);
};

struct UserChannelSet {
  MatC columns;  // n_tx x n_users, column k = h_k
  int n_users() const { return static_cast<int>(columns.cols()); }
};

struct SymbolFrame {
  Eigen::MatrixXi indices;  // n_users x frame_len, into Constellation::points
  MatC symbols;             // same shape, the mapped points
};

// Per-target shaping data: row k of reference is the drawn sequence u_k,
// tolerance(k) the residual budget, scale(k) the fitted d_k after a solve.
struct NoiseShapingAux {
  MatC reference;  // n_targets x frame_len
  VecR tolerance;
  VecC scale;
};

enum class GridKind { Uniform, Chebyshev };

struct UncertaintyModel {
  double eps_user = 0.0;    // channel ball radius, common to all users
  double eps_target = 0.0;  // half width of the angle interval, radians
  int grid_size = 5;
  GridKind grid_kind = GridKind::Uniform;
};

struct QosSpec {
  // Either a direct symbol error ceiling or an SNR threshold (linear).
  std::optional<double> epsilon;
  std::optional<double> gamma;
};

}  // namespace iscc
