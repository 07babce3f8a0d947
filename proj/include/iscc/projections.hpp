#pragma once

#include <memory>

#include "iscc/pda.hpp"
#include "iscc/surrogate.hpp"
#include "iscc/types.hpp"

namespace iscc {

// Scale the stacked waveform back to the energy ball when it overflows.
void project_power_ball(VecC& x, double power);

// x_l += (mu - Re{g^H x_l})+ / ||g||^2 * g for the slot's margin direction g.
void project_margin_halfspace(Eigen::Ref<VecC> x_slot, const VecC& g,
                              double mu);

// Margin with a norm-slack discount: Re{g^H x} - eps * r >= mu, projected
// jointly in (x, r).
void project_robust_margin_halfspace(Eigen::Ref<VecC> x_slot, double& r,
                                     const VecC& g, double eps, double mu);

// Second-order cone ||x|| <= r, projected jointly in (x, r).
void project_norm_cone(Eigen::Ref<VecC> x_slot, double& r);
double norm_cone_distance(const Eigen::Ref<const VecC>& x_slot, double r);

// Mean-square shaping constraint of one probe direction:
//   sum_l |a^H x_l - d u_l|^2 <= budget,   sym^H (a^H X)^T = 0,
// projected jointly in (x, d). The optional orthogonality block pins the
// probed response against a set of sequences (the transmitted data rows),
// so the shaped direction carries no symbol correlation at all. With u
// orthogonal to sym the equality part splits off exactly: strip first,
// then the two-eigenvalue structure of the ball operator gives an O(L)
// exact evaluation per multiplier guess.
struct NoiseShapeOp {
  VecC a;         // unit-norm tx steering at the probe angle
  VecC u;         // reference sequence, length L, orthogonal to sym
  MatC sym;       // L x m orthonormal block to null out (may be empty)
  double budget;  // frame_len * delta
  int d_index;    // which entry of DecisionPoint.d this op drives
};

void project_noise_shape(const NoiseShapeOp& op, Eigen::Ref<MatC> slots,
                         cxd& d);
double noise_shape_distance(const NoiseShapeOp& op,
                            const Eigen::Ref<const MatC>& slots, cxd d);

// --- set factories for the averaged-projection engine ---

ProjectionSet make_power_set(double power);

ProjectionSet make_margin_set(std::string label, std::shared_ptr<const VecC> g,
                              double mu, int slot, int n_tx);

ProjectionSet make_robust_margin_set(std::string label,
                                     std::shared_ptr<const VecC> g, double eps,
                                     double mu, int slot, int n_tx);

ProjectionSet make_norm_cone_set(int slot, int n_tx);

ProjectionSet make_noise_shape_set(std::string label,
                                   std::shared_ptr<const NoiseShapeOp> op,
                                   int n_tx);

ProjectionSet make_surrogate_set(std::string label,
                                 std::shared_ptr<const SurrogateData> data);

}  // namespace iscc
