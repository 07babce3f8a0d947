#include "iscc/pda.hpp"

#include <cmath>

namespace iscc {

DecisionPoint DecisionPoint::zeros_like(const DecisionPoint& p) {
  DecisionPoint z = p;
  z.setZero();
  return z;
}

void DecisionPoint::setZero() {
  x.setZero();
  d.setZero();
  upsilon.setZero();
  tau.setZero();
  r.setZero();
  xi = 0.0;
}

void DecisionPoint::add_scaled(const DecisionPoint& p, double w) {
  x += w * p.x;
  d += w * p.d;
  upsilon += w * p.upsilon;
  tau += w * p.tau;
  r += w * p.r;
  xi += w * p.xi;
}

double DecisionPoint::squared_distance(const DecisionPoint& o) const {
  double s = (x - o.x).squaredNorm() + (d - o.d).squaredNorm() +
             (upsilon - o.upsilon).squaredNorm() + (tau - o.tau).squaredNorm() +
             (r - o.r).squaredNorm();
  double dxi = xi - o.xi;
  return s + dxi * dxi;
}

double DecisionPoint::norm(const DecisionPoint& o) const {
  return std::sqrt(squared_distance(o));
}

DecisionPoint extrapolate(const DecisionPoint& y, const DecisionPoint& y_prev,
                          double zeta) {
  DecisionPoint out = y;
  out.x += zeta * (y.x - y_prev.x);
  out.d += zeta * (y.d - y_prev.d);
  out.upsilon += zeta * (y.upsilon - y_prev.upsilon);
  out.tau += zeta * (y.tau - y_prev.tau);
  out.r += zeta * (y.r - y_prev.r);
  out.xi += zeta * (y.xi - y_prev.xi);
  return out;
}

double ProjectionSet::distance(const DecisionPoint& p) const {
  if (residual) return residual(p);
  DecisionPoint q = p;
  project(q);
  return p.norm(q);
}

double penalized_objective(const DecisionPoint& p,
                           const std::vector<ProjectionSet>& sets,
                           double rho) {
  double acc = 0.0;
  for (const ProjectionSet& s : sets) {
    double d = s.distance(p);
    acc += d * d;
  }
  return p.xi + rho / (2.0 * sets.size()) * acc;
}

DecisionPoint pda_step(const DecisionPoint& p,
                       const std::vector<ProjectionSet>& sets, double rho,
                       const DecisionPoint* anchor, double beta) {
  DecisionPoint avg = DecisionPoint::zeros_like(p);
  const double w = 1.0 / sets.size();
  DecisionPoint scratch;
  for (const ProjectionSet& s : sets) {
    scratch = p;
    s.project(scratch);
    avg.add_scaled(scratch, w);
  }
  avg.xi -= 1.0 / rho;
  if (anchor && beta > 0.0) {
    double b = beta / (1.0 + beta);
    avg.x += b * (anchor->x - avg.x);
    avg.d += b * (anchor->d - avg.d);
    avg.upsilon += b * (anchor->upsilon - avg.upsilon);
    avg.tau += b * (anchor->tau - avg.tau);
    avg.r += b * (anchor->r - avg.r);
  }
  return avg;
}

PdaResult pda_solve(const DecisionPoint& init,
                    const std::vector<ProjectionSet>& sets,
                    const PdaOptions& opts) {
  PdaResult res;
  DecisionPoint y = init;
  DecisionPoint y_prev = init;
  double rho = opts.schedule.rho_init;
  double best_obj = penalized_objective(y, sets, rho);
  int accel_k = 1;

  for (int it = 1; it <= opts.max_iters; ++it) {
    DecisionPoint probe =
        opts.accelerate && accel_k > 1
            ? extrapolate(y, y_prev, (accel_k - 1.0) / (accel_k + opts.accel_delay))
            : y;
    DecisionPoint next =
        pda_step(probe, sets, rho,
                 opts.anchor_damping > 0.0 ? &init : nullptr,
                 opts.anchor_damping);

    double step = next.norm(y);
    double max_res = 0.0;
    double acc = 0.0;
    for (const ProjectionSet& s : sets) {
      double dist = s.distance(next);
      max_res = std::max(max_res, dist);
      acc += dist * dist;
    }
    double obj = next.xi + rho / (2.0 * sets.size()) * acc;

    if (opts.accelerate) {
      if (obj > best_obj) {
        accel_k = 1;  // restart momentum once the merit stops improving
      } else {
        ++accel_k;
        best_obj = obj;
      }
    }

    y_prev = y;
    y = next;
    res.trace.push_back({it, y.xi, rho, max_res, step});
    res.iters = it;
    res.max_residual = max_res;

    if (max_res <= opts.residual_tol && step <= opts.step_tol) {
      res.converged = true;
      break;
    }
    if (it % opts.schedule.period == 0 && rho < opts.schedule.rho_max) {
      rho = std::min(rho * opts.schedule.growth, opts.schedule.rho_max);
      best_obj = penalized_objective(y, sets, rho);
    }
  }
  res.point = y;
  res.rho_final = rho;
  return res;
}

}  // namespace iscc
