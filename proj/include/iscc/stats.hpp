#pragma once

namespace iscc {

// Gaussian right-tail probability Q(x) = P(Z > x).
double gaussian_q(double x);

// Inverse of gaussian_q on (0, 1); rational initial guess refined by Newton
// steps, absolute error below 1e-10 for p in [1e-12, 1-1e-12].
double gaussian_q_inv(double p);

struct ConfidenceInterval {
  double lo = 0.0;
  double hi = 1.0;
};

// Wilson score interval for a binomial proportion.
ConfidenceInterval wilson_interval(long long successes, long long trials,
                                   double z = 1.959963984540054);

}  // namespace iscc
