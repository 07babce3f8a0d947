#pragma once

#include <Eigen/Cholesky>
#include <memory>

#include "iscc/pda.hpp"
#include "iscc/types.hpp"

namespace iscc {

// Per-axis margin offsets keeping one square-QAM symbol's decision cell
// error within budget: interior cells use the two-sided bound alpha on both
// sides, edge cells the one-sided bound beta with the outward side free.
struct QamCellBounds {
  double alpha = 0.0;
  double beta = 0.0;
};

QamCellBounds qam_bounds(double epsilon, double noise_power);

// One real-axis margin constraint block for a user: slot coordinates s of
// the transmitted symbols and finite margin offsets a (lower) and c (upper);
// an unset flag marks the unbounded side of an edge cell.
struct QamAxisProblem {
  VecR s;
  VecR a, c;
  std::vector<bool> a_finite, c_finite;
};

// Assemble the axis problems (re then im per user) for a symbol frame on
// the odd-integer grid of the given order; bounds may differ per user.
std::vector<QamAxisProblem> qam_axis_problems(const MatC& symbols, int order,
                                              const VecR& alpha,
                                              const VecR& beta);

// Exact projection of (v, tau) onto {l(tau) <= v <= u(tau), tau >= 0} with
// l = (s-1)tau + a, u = (s+1)tau - c, shared tau: convex piecewise-quadratic
// minimization over the breakpoint intervals of the clamp pattern. tighten
// shifts both offsets outward per slot (worst-case channel error budget).
double project_qam_axis(const QamAxisProblem& pb, const VecR& v_bar,
                        double tau_bar, VecR& v_out,
                        const VecR* tighten = nullptr);

// Linear coupling upsilon_l = H x_l between the waveform and the received
// proxies; the normal-equation factor is built once and reused per slot.
struct ChannelCoupling {
  MatC h;  // n_users x n_tx, row k = h_k^H
  Eigen::LLT<MatC> llt;  // of I + H^H H
};

ChannelCoupling make_channel_coupling(const UserChannelSet& channels);

void project_coupling(const ChannelCoupling& cp, Eigen::Ref<VecC> x_slot,
                      Eigen::Ref<VecC> ups_slot);

ProjectionSet make_coupling_set(std::shared_ptr<const ChannelCoupling> cp,
                                int slot, int n_tx, int n_users);

// Joint margin set over all users and both axes; when eps_user > 0 the cell
// boxes are tightened by eps_user * r_l with the slacks held fixed.
ProjectionSet make_qam_margin_set(
    std::shared_ptr<const std::vector<QamAxisProblem>> problems, int n_users,
    int frame_len, double eps_user = 0.0);

}  // namespace iscc
