#include "iscc/robust.hpp"

#include <cmath>

namespace iscc {

std::vector<double> angle_grid(double center, double half_width, int size,
                               GridKind kind) {
  std::vector<double> grid;
  if (size <= 1 || half_width <= 0.0) {
    grid.push_back(center);
    return grid;
  }
  grid.reserve(size);
  if (kind == GridKind::Uniform) {
    for (int m = 1; m <= size; ++m)
      grid.push_back(center + half_width * (2.0 * m - size - 1.0) / (size - 1.0));
  } else {
    // emitted ascending; the raw cosine ordering runs the other way
    for (int m = size; m >= 1; --m)
      grid.push_back(center +
                     half_width * std::cos((2.0 * m - 1.0) * kPi / (2.0 * size)));
  }
  return grid;
}

double worst_case_margin(const VecC& g, const VecC& x_slot, double eps) {
  return std::real(g.dot(x_slot)) - eps * x_slot.norm();
}

}  // namespace iscc
