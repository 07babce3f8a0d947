#pragma once

#include <vector>

#include "iscc/types.hpp"

namespace iscc {

// Discretization of [center - hw, center + hw]: evenly spaced including the
// endpoints, or Chebyshev nodes strictly inside. size 1 collapses to the
// center.
std::vector<double> angle_grid(double center, double half_width, int size,
                               GridKind kind);

// Smallest margin Re{(h + e)^H x} over the channel error ball ||e|| <= eps,
// attained at e = -eps * x / ||x||.
double worst_case_margin(const VecC& g, const VecC& x_slot, double eps);

}  // namespace iscc
