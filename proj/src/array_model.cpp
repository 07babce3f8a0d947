#include "iscc/array_model.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

namespace iscc {

Constellation Constellation::psk(int m) {
  Constellation c;
  c.kind = ConstellationKind::Psk;
  c.order = m;
  c.points.resize(m);
  for (int i = 0; i < m; ++i) {
    double a = 2.0 * kPi * i / m;
    c.points[i] = {std::cos(a), std::sin(a)};
  }
  return c;
}

Constellation Constellation::qam(int m) {
  Constellation c;
  c.kind = ConstellationKind::Qam;
  c.order = m;
  c.points.reserve(4 * m * m);
  for (int i = -m; i < m; ++i)
    for (int q = -m; q < m; ++q)
      c.points.push_back({2.0 * i + 1.0, 2.0 * q + 1.0});
  return c;
}

double Constellation::mean_energy() const {
  double s = 0.0;
  for (cxd p : points) s += std::norm(p);
  return s / points.size();
}

Constellation make_constellation(ConstellationKind kind, int order) {
  return kind == ConstellationKind::Psk ? Constellation::psk(order)
                                        : Constellation::qam(order);
}

VecC Waveform::stacked() const {
  return Eigen::Map<const VecC>(slots.data(), slots.size());
}

Waveform Waveform::from_stacked(const VecC& x, int n_tx) {
  Waveform w;
  w.slots = Eigen::Map<const MatC>(x.data(), n_tx, x.size() / n_tx);
  return w;
}

VecC steering_vector(double angle, int n, double spacing_ratio) {
  VecC a(n);
  double phase = 2.0 * kPi * spacing_ratio * std::sin(angle);
  double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (int i = 0; i < n; ++i)
    a(i) = scale * cxd{std::cos(phase * i), std::sin(phase * i)};
  return a;
}

MatC SteeringMatrix::apply(const MatC& slots) const {
  return a_rx * (a_tx.adjoint() * slots);
}

MatC SteeringMatrix::apply_adjoint(const MatC& received) const {
  return a_tx * (a_rx.adjoint() * received);
}

MatC SteeringMatrix::dense() const {
  const int nr = static_cast<int>(a_rx.size());
  const int nt = static_cast<int>(a_tx.size());
  MatC block = a_rx * a_tx.adjoint();
  MatC out = MatC::Zero(nr * frame_len, nt * frame_len);
  for (int l = 0; l < frame_len; ++l)
    out.block(l * nr, l * nt, nr, nt) = block;
  return out;
}

SteeringMatrix steering_matrix(double angle, const SystemConfig& cfg) {
  SteeringMatrix s;
  s.a_rx = steering_vector(angle, cfg.n_rx, cfg.spacing_ratio);
  s.a_tx = steering_vector(angle, cfg.n_tx, cfg.spacing_ratio);
  s.frame_len = cfg.frame_len;
  return s;
}

ClutterCovariance interference_covariance(const Waveform& x,
                                          const TargetSpec& target,
                                          const SystemConfig& cfg) {
  if (target.rcs <= 0.0) throw std::invalid_argument("rcs must be positive");
  ClutterCovariance r;
  r.base = cfg.rx_noise_power / target.rcs;
  const int c_count = static_cast<int>(target.clutter.size());
  const int dim = cfg.n_rx * cfg.frame_len;
  r.factors.resize(dim, c_count);
  for (int c = 0; c < c_count; ++c) {
    const ClutterPatch& patch = target.clutter[c];
    SteeringMatrix sm = steering_matrix(patch.angle, cfg);
    MatC echo = sm.apply(x.slots);
    double w = std::sqrt(patch.power / target.rcs);
    r.factors.col(c) = w * Eigen::Map<const VecC>(echo.data(), echo.size());
  }
  MatC small = r.factors.adjoint() * r.factors;
  small.diagonal().array() += r.base;
  r.small_llt.compute(small);
  return r;
}

VecC ClutterCovariance::solve(const VecC& b) const {
  if (factors.cols() == 0) return b / base;
  VecC t = small_llt.solve(factors.adjoint() * b);
  return (b - factors * t) / base;
}

MatC ClutterCovariance::solve(const MatC& b) const {
  if (factors.cols() == 0) return b / base;
  MatC t = small_llt.solve(factors.adjoint() * b);
  return (b - factors * t) / base;
}

MatC ClutterCovariance::dense() const {
  MatC r = factors * factors.adjoint();
  r.diagonal().array() += base;
  return r;
}

UserChannelSet sample_rician_channels(const Scene& scene,
                                      const SystemConfig& cfg,
                                      RngStream& rng) {
  const int k_u = static_cast<int>(scene.users.size());
  UserChannelSet set;
  set.columns.resize(cfg.n_tx, k_u);
  const double root_nt = std::sqrt(static_cast<double>(cfg.n_tx));
  for (int k = 0; k < k_u; ++k) {
    const UserSpec& u = scene.users[k];
    double v = u.rician_factor;
    VecC h = std::sqrt(v / (1.0 + v)) * root_nt *
             steering_vector(u.angle, cfg.n_tx, cfg.spacing_ratio);
    if (u.n_paths > 0) {
      double w = std::sqrt(1.0 / (1.0 + v)) * root_nt /
                 std::sqrt(static_cast<double>(u.n_paths));
      for (int p = 0; p < u.n_paths; ++p) {
        double ang = (rng.uniform() - 0.5) * kPi;
        cxd gain = rng.cnormal();
        h += w * gain * steering_vector(ang, cfg.n_tx, cfg.spacing_ratio);
      }
    }
    set.columns.col(k) = h;
  }
  return set;
}

SymbolFrame draw_symbol_frame(const Constellation& cst, int n_users,
                              int frame_len, RngStream& rng) {
  SymbolFrame f;
  f.indices.resize(n_users, frame_len);
  f.symbols.resize(n_users, frame_len);
  std::vector<int> deck(frame_len);
  for (int k = 0; k < n_users; ++k) {
    // balanced draw: cycle the constellation, then shuffle; equal symbol
    // counts keep each frame DC free, so a static beam cannot alias into
    // a stream estimate
    for (int l = 0; l < frame_len; ++l) deck[l] = l % cst.size();
    for (int l = frame_len - 1; l > 0; --l)
      std::swap(deck[l], deck[rng.uniform_int(l + 1)]);
    for (int l = 0; l < frame_len; ++l) {
      f.indices(k, l) = deck[l];
      f.symbols(k, l) = cst.points[deck[l]];
    }
  }
  return f;
}

MatC draw_noise_reference(int n_targets, int frame_len, RngStream& rng) {
  MatC u(n_targets, frame_len);
  for (int k = 0; k < n_targets; ++k)
    for (int l = 0; l < frame_len; ++l) u(k, l) = rng.cnormal();
  return u;
}

}  // namespace iscc
