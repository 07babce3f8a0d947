#include "iscc/surrogate.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace iscc {

SurrogateData build_surrogate(const Waveform& ref, const TargetSpec& target,
                              const SystemConfig& cfg) {
  return build_surrogate_at(ref, target, cfg, target.angle);
}

SurrogateData build_surrogate_at(const Waveform& ref, const TargetSpec& target,
                                 const SystemConfig& cfg, double angle) {
  SurrogateData s;
  SteeringMatrix a = steering_matrix(angle, cfg);
  ClutterCovariance r = interference_covariance(ref, target, cfg);

  MatC echo = a.apply(ref.slots);
  VecC y = Eigen::Map<const VecC>(echo.data(), echo.size());
  VecC w = r.solve(y);
  MatC wm = Eigen::Map<const MatC>(w.data(), cfg.n_rx, cfg.frame_len);
  MatC back = a.apply_adjoint(wm);
  s.m = Eigen::Map<const VecC>(back.data(), back.size());
  s.value_ref = std::real(y.dot(w));
  s.constant = -r.base * w.squaredNorm();

  const int c_count = static_cast<int>(target.clutter.size());
  s.factors.resize(cfg.n_tx * cfg.frame_len, c_count);
  for (int c = 0; c < c_count; ++c) {
    const ClutterPatch& patch = target.clutter[c];
    SteeringMatrix sc = steering_matrix(patch.angle, cfg);
    MatC g = sc.apply_adjoint(wm);
    double wgt = std::sqrt(patch.power / target.rcs);
    s.factors.col(c) = wgt * Eigen::Map<const VecC>(g.data(), g.size());
  }

  if (c_count > 0) {
    Eigen::SelfAdjointEigenSolver<MatC> es(s.factors.adjoint() * s.factors);
    double cutoff = 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff());
    int keep = 0;
    for (int i = 0; i < c_count; ++i)
      if (es.eigenvalues()(i) > cutoff) ++keep;
    s.basis.resize(s.factors.rows(), keep);
    s.lam.resize(keep);
    int j = 0;
    for (int i = 0; i < c_count; ++i) {
      double ev = es.eigenvalues()(i);
      if (ev <= cutoff) continue;
      s.basis.col(j) = s.factors * es.eigenvectors().col(i) / std::sqrt(ev);
      s.lam(j) = ev;
      ++j;
    }
  }
  return s;
}

double surrogate_value(const SurrogateData& s, const VecC& x) {
  double quad =
      s.factors.cols() > 0 ? (s.factors.adjoint() * x).squaredNorm() : 0.0;
  return -quad + 2.0 * std::real(s.m.dot(x)) + s.constant;
}

namespace {

struct SurrogateLine {
  // spectral components along the basis, for one candidate multiplier
  VecC p, q;      // basis^H x, basis^H m
  VecR lam;
  double mx_re = 0.0;   // Re{m^H x}
  double mm = 0.0;      // ||m||^2
  double c0 = 0.0;
  double xi0 = 0.0;

  double eval(double t) const {
    double quad = 0.0;
    double lin = mx_re + t * mm;
    for (int i = 0; i < lam.size(); ++i) {
      cxd ci = (p(i) + t * q(i)) / (1.0 + t * lam(i));
      quad += lam(i) * std::norm(ci);
      lin -= std::real(std::conj(q(i)) * (t * lam(i) / (1.0 + t * lam(i))) *
                       (p(i) + t * q(i)));
    }
    return -quad + 2.0 * lin + c0 + xi0 + 0.5 * t;
  }
};

}  // namespace

double project_surrogate_epigraph(const SurrogateData& s, VecC& x,
                                  double& xi) {
  double g0 = surrogate_value(s, x) + xi;
  if (g0 >= 0.0) return 0.0;

  if (s.lam.size() == 0) {
    // pure half-space in (x, xi) with normal (2m, 1)
    double t = -g0 / (4.0 * s.m.squaredNorm() + 1.0);
    x += 2.0 * t * s.m;
    xi += t;
    return 2.0 * t;
  }

  SurrogateLine line;
  line.p = s.basis.adjoint() * x;
  line.q = s.basis.adjoint() * s.m;
  line.lam = s.lam;
  line.mx_re = std::real(s.m.dot(x));
  line.mm = s.m.squaredNorm();
  line.c0 = s.constant;
  line.xi0 = xi;

  double lo = 0.0, hi = 1.0;
  int guard = 0;
  while (line.eval(hi) < 0.0) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 200)
      throw std::runtime_error("surrogate projection: bracket failed");
  }
  double mid = hi;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    double v = line.eval(mid);
    if (std::abs(v) <= 1e-10) break;
    (v < 0.0 ? lo : hi) = mid;
  }

  // x(t) = (I + t G G^H)^{-1} (x + t m), assembled from the basis split
  VecC rhs_par = line.p + mid * line.q;
  VecC coef(line.lam.size());
  for (int i = 0; i < line.lam.size(); ++i)
    coef(i) = rhs_par(i) * (mid * line.lam(i) / (1.0 + mid * line.lam(i)));
  x += mid * s.m - s.basis * coef;
  xi += 0.5 * mid;
  return mid;
}

}  // namespace iscc
