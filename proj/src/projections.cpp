#include "iscc/projections.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace iscc {

void project_power_ball(VecC& x, double power) {
  double n2 = x.squaredNorm();
  if (n2 > power) x *= std::sqrt(power / n2);
}

void project_margin_halfspace(Eigen::Ref<VecC> x_slot, const VecC& g,
                              double mu) {
  double gap = mu - std::real(g.dot(x_slot));
  if (gap > 0.0) x_slot += (gap / g.squaredNorm()) * g;
}

void project_robust_margin_halfspace(Eigen::Ref<VecC> x_slot, double& r,
                                     const VecC& g, double eps, double mu) {
  double gap = mu - std::real(g.dot(x_slot)) + eps * r;
  if (gap <= 0.0) return;
  double t = gap / (g.squaredNorm() + eps * eps);
  x_slot += t * g;
  r -= t * eps;
}

void project_norm_cone(Eigen::Ref<VecC> x_slot, double& r) {
  double n = x_slot.norm();
  if (n <= r) return;
  if (n <= -r) {
    x_slot.setZero();
    r = 0.0;
    return;
  }
  double t = 0.5 * (n + r);
  x_slot *= t / n;
  r = t;
}

double norm_cone_distance(const Eigen::Ref<const VecC>& x_slot, double r) {
  double n = x_slot.norm();
  if (n <= r) return 0.0;
  if (n <= -r) return std::sqrt(n * n + r * r);
  return (n - r) / std::sqrt(2.0);
}

namespace {

// residual e_l = a^H x_l - d u_l and its split against the dominant
// eigenvector u/||u|| of the constraint Gram matrix I + u u^H
struct ShapeState {
  VecC e;
  double e_par2 = 0.0;   // |u^H e|^2 / ||u||^2
  double e_perp2 = 0.0;
  double s1 = 1.0;       // 1 + ||u||^2
};

ShapeState shape_state(const NoiseShapeOp& op,
                       const Eigen::Ref<const MatC>& slots, cxd d) {
  ShapeState st;
  st.e = (op.a.adjoint() * slots).transpose();
  st.e -= d * op.u;
  double un2 = op.u.squaredNorm();
  st.s1 = 1.0 + un2;
  double full = st.e.squaredNorm();
  if (un2 > 0.0) {
    st.e_par2 = std::norm(op.u.dot(st.e)) / un2;
    st.e_perp2 = std::max(0.0, full - st.e_par2);
  } else {
    st.e_perp2 = full;
  }
  return st;
}

double shape_norm_at(const ShapeState& st, double t) {
  double a = 1.0 + t * st.s1;
  double b = 1.0 + t;
  return st.e_par2 / (a * a) + st.e_perp2 / (b * b);
}

}  // namespace

void project_noise_shape(const NoiseShapeOp& op, Eigen::Ref<MatC> slots,
                         cxd& d) {
  if (op.sym.cols() > 0) {
    // null the symbol-correlated part of the response first; with the ball
    // center d u in the complement this split is the exact joint projection
    VecC r = (op.a.adjoint() * slots).transpose();
    VecC c = op.sym.adjoint() * r;
    if (c.squaredNorm() > 0.0)
      slots.noalias() -= op.a * (op.sym * c).transpose();
  }
  ShapeState st = shape_state(op, slots, d);
  if (st.e_par2 + st.e_perp2 <= op.budget) return;

  double lo = 0.0, hi = 1.0;
  int guard = 0;
  while (shape_norm_at(st, hi) > op.budget) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 200)
      throw std::runtime_error("noise shaping projection: bracket failed");
  }
  double mid = hi;
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    double v = shape_norm_at(st, mid) - op.budget;
    if (std::abs(v) <= 1e-10) break;
    (v > 0.0 ? lo : hi) = mid;
  }

  // z -= t B^H (I + t B B^H)^{-1} e via the same eigen split
  double un2 = op.u.squaredNorm();
  VecC t_vec;
  if (un2 > 0.0) {
    cxd par = op.u.dot(st.e) / un2;  // component along u
    VecC e_par = par * op.u;
    t_vec = mid * (e_par / (1.0 + mid * st.s1) +
                   (st.e - e_par) / (1.0 + mid));
  } else {
    t_vec = mid * st.e / (1.0 + mid);
  }
  slots.noalias() -= op.a * t_vec.transpose();
  d += op.u.dot(t_vec);
}

double noise_shape_distance(const NoiseShapeOp& op,
                            const Eigen::Ref<const MatC>& slots, cxd d) {
  // distance to the set equals the norm of the applied correction; reuse the
  // multiplier solve on a copy
  if (op.sym.cols() == 0) {
    ShapeState st = shape_state(op, slots, d);
    if (st.e_par2 + st.e_perp2 <= op.budget) return 0.0;
  }
  MatC s = slots;
  cxd dd = d;
  project_noise_shape(op, s, dd);
  double move = (s - slots).squaredNorm() + std::norm(dd - d);
  return std::sqrt(move);
}

ProjectionSet make_power_set(double power) {
  ProjectionSet set;
  set.label = "power";
  set.project = [power](DecisionPoint& p) { project_power_ball(p.x, power); };
  set.residual = [power](const DecisionPoint& p) {
    double n = p.x.norm();
    double rad = std::sqrt(power);
    return n > rad ? n - rad : 0.0;
  };
  return set;
}

ProjectionSet make_margin_set(std::string label, std::shared_ptr<const VecC> g,
                              double mu, int slot, int n_tx) {
  ProjectionSet set;
  set.label = std::move(label);
  double gn2 = g->squaredNorm();
  if (gn2 <= 0.0)
    throw std::invalid_argument("margin halfspace needs a nonzero direction");
  set.project = [g, mu, slot, n_tx](DecisionPoint& p) {
    project_margin_halfspace(p.x.segment(slot * n_tx, n_tx), *g, mu);
  };
  set.residual = [g, mu, slot, n_tx, gn2](const DecisionPoint& p) {
    double gap = mu - std::real(g->dot(p.x.segment(slot * n_tx, n_tx)));
    return gap > 0.0 ? gap / std::sqrt(gn2) : 0.0;
  };
  return set;
}

ProjectionSet make_robust_margin_set(std::string label,
                                     std::shared_ptr<const VecC> g, double eps,
                                     double mu, int slot, int n_tx) {
  ProjectionSet set;
  set.label = std::move(label);
  double n2 = g->squaredNorm() + eps * eps;
  set.project = [g, eps, mu, slot, n_tx](DecisionPoint& p) {
    project_robust_margin_halfspace(p.x.segment(slot * n_tx, n_tx), p.r(slot),
                                    *g, eps, mu);
  };
  set.residual = [g, eps, mu, slot, n_tx, n2](const DecisionPoint& p) {
    double gap =
        mu - std::real(g->dot(p.x.segment(slot * n_tx, n_tx))) + eps * p.r(slot);
    return gap > 0.0 ? gap / std::sqrt(n2) : 0.0;
  };
  return set;
}

ProjectionSet make_norm_cone_set(int slot, int n_tx) {
  ProjectionSet set;
  set.label = "cone[" + std::to_string(slot) + "]";
  set.project = [slot, n_tx](DecisionPoint& p) {
    project_norm_cone(p.x.segment(slot * n_tx, n_tx), p.r(slot));
  };
  set.residual = [slot, n_tx](const DecisionPoint& p) {
    return norm_cone_distance(p.x.segment(slot * n_tx, n_tx), p.r(slot));
  };
  return set;
}

ProjectionSet make_noise_shape_set(std::string label,
                                   std::shared_ptr<const NoiseShapeOp> op,
                                   int n_tx) {
  ProjectionSet set;
  set.label = std::move(label);
  set.project = [op, n_tx](DecisionPoint& p) {
    Eigen::Map<MatC> slots(p.x.data(), n_tx, p.x.size() / n_tx);
    project_noise_shape(*op, slots, p.d(op->d_index));
  };
  set.residual = [op, n_tx](const DecisionPoint& p) {
    Eigen::Map<const MatC> slots(p.x.data(), n_tx, p.x.size() / n_tx);
    return noise_shape_distance(*op, slots, p.d(op->d_index));
  };
  return set;
}

ProjectionSet make_surrogate_set(std::string label,
                                 std::shared_ptr<const SurrogateData> data) {
  ProjectionSet set;
  set.label = std::move(label);
  set.project = [data](DecisionPoint& p) {
    project_surrogate_epigraph(*data, p.x, p.xi);
  };
  set.residual = [data](const DecisionPoint& p) {
    VecC x = p.x;
    double xi = p.xi;
    project_surrogate_epigraph(*data, x, xi);
    double dxi = xi - p.xi;
    return std::sqrt((x - p.x).squaredNorm() + dxi * dxi);
  };
  return set;
}

}  // namespace iscc
