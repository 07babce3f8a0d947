#include "iscc/qam.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "iscc/stats.hpp"

namespace iscc {

QamCellBounds qam_bounds(double epsilon, double noise_power) {
  QamCellBounds b;
  double per_axis = 1.0 - std::sqrt(1.0 - epsilon);
  double sigma_axis = std::sqrt(noise_power / 2.0);
  b.alpha = sigma_axis * gaussian_q_inv(per_axis / 2.0);
  b.beta = sigma_axis * gaussian_q_inv(per_axis);
  return b;
}

std::vector<QamAxisProblem> qam_axis_problems(const MatC& symbols, int order,
                                              const VecR& alpha,
                                              const VecR& beta) {
  const int n_users = static_cast<int>(symbols.rows());
  const int frame_len = static_cast<int>(symbols.cols());
  const double edge = 2.0 * order - 1.0;
  std::vector<QamAxisProblem> out;
  out.reserve(2 * n_users);
  for (int k = 0; k < n_users; ++k)
    for (int axis = 0; axis < 2; ++axis) {
      QamAxisProblem pb;
      pb.s.resize(frame_len);
      pb.a.resize(frame_len);
      pb.c.resize(frame_len);
      pb.a_finite.assign(frame_len, true);
      pb.c_finite.assign(frame_len, true);
      for (int l = 0; l < frame_len; ++l) {
        double s = axis == 0 ? symbols(k, l).real() : symbols(k, l).imag();
        pb.s(l) = s;
        if (s >= edge) {
          pb.a(l) = beta(k);
          pb.c(l) = 0.0;
          pb.c_finite[l] = false;
        } else if (s <= -edge) {
          pb.a(l) = 0.0;
          pb.a_finite[l] = false;
          pb.c(l) = beta(k);
        } else {
          pb.a(l) = alpha(k);
          pb.c(l) = alpha(k);
        }
      }
      out.push_back(std::move(pb));
    }
  return out;
}

namespace {

double axis_objective(const QamAxisProblem& pb, const VecR& v_bar,
                      double tau_bar, double tau, const VecR& a,
                      const VecR& c) {
  double f = (tau - tau_bar) * (tau - tau_bar);
  for (int l = 0; l < v_bar.size(); ++l) {
    double v = v_bar(l);
    if (pb.a_finite[l]) {
      double lo = (pb.s(l) - 1.0) * tau + a(l);
      if (v < lo) v = lo;
    }
    if (pb.c_finite[l]) {
      double hi = (pb.s(l) + 1.0) * tau - c(l);
      if (v > hi) v = hi;
    }
    double dv = v - v_bar(l);
    f += dv * dv;
  }
  return f;
}

}  // namespace

double project_qam_axis(const QamAxisProblem& pb, const VecR& v_bar,
                        double tau_bar, VecR& v_out, const VecR* tighten) {
  const int n = static_cast<int>(v_bar.size());
  VecR a = pb.a, c = pb.c;
  if (tighten)
    for (int l = 0; l < n; ++l) {
      if (pb.a_finite[l]) a(l) += (*tighten)(l);
      if (pb.c_finite[l]) c(l) += (*tighten)(l);
    }

  double tau_min = 0.0;
  for (int l = 0; l < n; ++l)
    if (pb.a_finite[l] && pb.c_finite[l])
      tau_min = std::max(tau_min, 0.5 * (a(l) + c(l)));

  // clamp-pattern switch points along the tau axis
  std::vector<double> knots;
  knots.push_back(tau_min);
  for (int l = 0; l < n; ++l) {
    if (pb.a_finite[l] && pb.s(l) != 1.0) {
      double t = (v_bar(l) - a(l)) / (pb.s(l) - 1.0);
      if (t > tau_min) knots.push_back(t);
    }
    if (pb.c_finite[l] && pb.s(l) != -1.0) {
      double t = (v_bar(l) + c(l)) / (pb.s(l) + 1.0);
      if (t > tau_min) knots.push_back(t);
    }
  }
  std::sort(knots.begin(), knots.end());
  knots.erase(std::unique(knots.begin(), knots.end()), knots.end());

  double best_tau = tau_min;
  double best_f = std::numeric_limits<double>::infinity();
  const double inf = std::numeric_limits<double>::infinity();

  for (std::size_t p = 0; p < knots.size(); ++p) {
    double left = knots[p];
    double right = p + 1 < knots.size() ? knots[p + 1] : inf;
    double probe = right < inf ? 0.5 * (left + right)
                               : left + std::max(1.0, std::abs(left));
    // pattern is constant inside the interval; classify at the probe point
    double num = tau_bar;
    double den = 1.0;
    for (int l = 0; l < n; ++l) {
      double lo = pb.a_finite[l] ? (pb.s(l) - 1.0) * probe + a(l) : -inf;
      double hi = pb.c_finite[l] ? (pb.s(l) + 1.0) * probe - c(l) : inf;
      if (v_bar(l) < lo) {
        double sm = pb.s(l) - 1.0;
        num += sm * (v_bar(l) - a(l));
        den += sm * sm;
      } else if (v_bar(l) > hi) {
        double sp = pb.s(l) + 1.0;
        num += sp * (v_bar(l) + c(l));
        den += sp * sp;
      }
    }
    double t = num / den;
    t = std::max(t, left);
    if (right < inf) t = std::min(t, right);
    double f = axis_objective(pb, v_bar, tau_bar, t, a, c);
    if (f < best_f) {
      best_f = f;
      best_tau = t;
    }
  }

  v_out = v_bar;
  for (int l = 0; l < n; ++l) {
    if (pb.a_finite[l]) {
      double lo = (pb.s(l) - 1.0) * best_tau + a(l);
      if (v_out(l) < lo) v_out(l) = lo;
    }
    if (pb.c_finite[l]) {
      double hi = (pb.s(l) + 1.0) * best_tau - c(l);
      if (v_out(l) > hi) v_out(l) = hi;
    }
  }
  return best_tau;
}

ChannelCoupling make_channel_coupling(const UserChannelSet& channels) {
  ChannelCoupling cp;
  cp.h = channels.columns.adjoint();
  MatC gram = cp.h.adjoint() * cp.h;
  gram.diagonal().array() += 1.0;
  cp.llt.compute(gram);
  return cp;
}

void project_coupling(const ChannelCoupling& cp, Eigen::Ref<VecC> x_slot,
                      Eigen::Ref<VecC> ups_slot) {
  VecC rhs = x_slot + cp.h.adjoint() * ups_slot;
  VecC xs = cp.llt.solve(rhs);
  x_slot = xs;
  ups_slot = cp.h * xs;
}

ProjectionSet make_coupling_set(std::shared_ptr<const ChannelCoupling> cp,
                                int slot, int n_tx, int n_users) {
  ProjectionSet set;
  set.label = "coupling[" + std::to_string(slot) + "]";
  set.project = [cp, slot, n_tx, n_users](DecisionPoint& p) {
    project_coupling(*cp, p.x.segment(slot * n_tx, n_tx),
                     p.upsilon.segment(slot * n_users, n_users));
  };
  set.residual = [cp, slot, n_tx, n_users](const DecisionPoint& p) {
    VecC x = p.x.segment(slot * n_tx, n_tx);
    VecC u = p.upsilon.segment(slot * n_users, n_users);
    VecC x2 = x, u2 = u;
    project_coupling(*cp, x2, u2);
    return std::sqrt((x2 - x).squaredNorm() + (u2 - u).squaredNorm());
  };
  return set;
}

ProjectionSet make_qam_margin_set(
    std::shared_ptr<const std::vector<QamAxisProblem>> problems, int n_users,
    int frame_len, double eps_user) {
  ProjectionSet set;
  set.label = "qam_margin";
  auto apply = [problems, n_users, frame_len, eps_user](DecisionPoint& p,
                                                        bool write) {
    double move2 = 0.0;
    VecR tight;
    if (eps_user > 0.0) tight = eps_user * p.r;
    VecR v_bar(frame_len), v_new(frame_len);
    for (int k = 0; k < n_users; ++k)
      for (int axis = 0; axis < 2; ++axis) {
        const QamAxisProblem& pb = (*problems)[2 * k + axis];
        for (int l = 0; l < frame_len; ++l) {
          cxd u = p.upsilon(l * n_users + k);
          v_bar(l) = axis == 0 ? u.real() : u.imag();
        }
        double tau_bar = p.tau(2 * k + axis);
        double tau_new =
            project_qam_axis(pb, v_bar, tau_bar, v_new,
                             eps_user > 0.0 ? &tight : nullptr);
        double dt = tau_new - tau_bar;
        move2 += dt * dt + (v_new - v_bar).squaredNorm();
        if (write) {
          p.tau(2 * k + axis) = tau_new;
          for (int l = 0; l < frame_len; ++l) {
            cxd& u = p.upsilon(l * n_users + k);
            u = axis == 0 ? cxd{v_new(l), u.imag()} : cxd{u.real(), v_new(l)};
          }
        }
      }
    return std::sqrt(move2);
  };
  set.project = [apply](DecisionPoint& p) { apply(p, true); };
  set.residual = [apply](const DecisionPoint& p) {
    DecisionPoint q = p;
    return apply(q, false);
  };
  return set;
}

}  // namespace iscc
