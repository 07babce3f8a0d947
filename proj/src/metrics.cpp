#include "iscc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "iscc/stats.hpp"

namespace iscc {

double scnr(const Waveform& x, const TargetSpec& target,
            const SystemConfig& cfg) {
  SteeringMatrix a = steering_matrix(target.angle, cfg);
  ClutterCovariance r = interference_covariance(x, target, cfg);
  MatC echo = a.apply(x.slots);
  VecC e = Eigen::Map<const VecC>(echo.data(), echo.size());
  return std::real(e.dot(r.solve(e)));
}

double detection_probability(double scnr_value, double p_fa) {
  if (!(p_fa > 0.0 && p_fa < 1.0))
    throw std::invalid_argument("false alarm rate must lie in (0, 1)");
  return gaussian_q(gaussian_q_inv(p_fa) - std::sqrt(std::max(0.0, scnr_value)));
}

double psk_safety_margin(const VecC& x_slot, const VecC& h, cxd symbol,
                         int m) {
  cxd w = h.dot(x_slot) * std::conj(symbol);
  double cot = std::cos(kPi / m) / std::sin(kPi / m);
  return w.real() - std::abs(w.imag()) * cot;
}

double psk_sep_bound(double margin, double noise_power, int m) {
  double arg = margin * std::sqrt(2.0 / noise_power) * std::sin(kPi / m);
  return std::min(1.0, 2.0 * gaussian_q(arg));
}

RotatedPair psk_rotated_pair(cxd symbol, int m) {
  double s = std::sin(kPi / m), c = std::cos(kPi / m);
  cxd cs = std::conj(symbol);
  return {cs * cxd{s, c}, cs * cxd{s, -c}};
}

double qos_threshold_psk(double epsilon, double noise_power, int m) {
  (void)m;
  return gaussian_q_inv(epsilon / 2.0) * std::sqrt(noise_power / 2.0);
}

double qos_threshold_psk_snr(double gamma, double noise_power, int m) {
  return std::sqrt(noise_power) * std::sin(kPi / m) * std::sqrt(gamma);
}

std::vector<BeampatternPoint> beampattern(const Waveform& x,
                                          const std::vector<double>& angles,
                                          const SystemConfig& cfg,
                                          const Scene& scene,
                                          BeampatternMode mode) {
  std::vector<BeampatternPoint> out;
  out.reserve(angles.size());
  for (double ang : angles) {
    BeampatternPoint p;
    p.angle = ang;
    if (mode == BeampatternMode::TxPower) {
      VecC a = steering_vector(ang, cfg.n_tx, cfg.spacing_ratio);
      p.value = (a.adjoint() * x.slots).squaredNorm() / cfg.frame_len;
    } else {
      TargetSpec probe;
      probe.angle = ang;
      probe.rcs = 1.0;
      for (const TargetSpec& t : scene.targets)
        for (const ClutterPatch& c : t.clutter) probe.clutter.push_back(c);
      p.value = scnr(x, probe, cfg);
    }
    out.push_back(p);
  }
  return out;
}

double noise_shaping_residual(const Waveform& x, const TargetSpec& target,
                              const NoiseShapingAux& aux, int k,
                              const SystemConfig& cfg) {
  VecC a = steering_vector(target.angle, cfg.n_tx, cfg.spacing_ratio);
  double acc = 0.0;
  for (int l = 0; l < cfg.frame_len; ++l) {
    cxd got = a.dot(x.slots.col(l));
    acc += std::norm(got - aux.scale(k) * aux.reference(k, l));
  }
  return acc / cfg.frame_len;
}

HistogramBox jsd_support_box(const std::vector<cxd>& a,
                             const std::vector<cxd>& b, double quantile) {
  std::vector<double> mags;
  mags.reserve(a.size() + b.size());
  for (cxd z : a) mags.push_back(std::abs(z));
  for (cxd z : b) mags.push_back(std::abs(z));
  if (mags.empty()) return {1.0};
  std::size_t idx = static_cast<std::size_t>(quantile * (mags.size() - 1));
  std::nth_element(mags.begin(), mags.begin() + idx, mags.end());
  double hw = mags[idx];
  return {hw > 0.0 ? hw : 1.0};
}

namespace {

MatR smoothed_histogram(const std::vector<cxd>& samples, int bins,
                        double half_width) {
  MatR h = MatR::Constant(bins, bins, 0.5);
  double scale = bins / (2.0 * half_width);
  for (cxd z : samples) {
    int i = static_cast<int>((z.real() + half_width) * scale);
    int q = static_cast<int>((z.imag() + half_width) * scale);
    i = std::clamp(i, 0, bins - 1);
    q = std::clamp(q, 0, bins - 1);
    h(i, q) += 1.0;
  }
  return h / h.sum();
}

}  // namespace

double js_divergence(const std::vector<cxd>& a, const std::vector<cxd>& b,
                     int bins, const HistogramBox& box) {
  MatR p = smoothed_histogram(a, bins, box.half_width);
  MatR q = smoothed_histogram(b, bins, box.half_width);
  double d = 0.0;
  for (int i = 0; i < bins; ++i)
    for (int j = 0; j < bins; ++j) {
      double m = 0.5 * (p(i, j) + q(i, j));
      d += 0.5 * p(i, j) * std::log(p(i, j) / m) +
           0.5 * q(i, j) * std::log(q(i, j) / m);
    }
  return std::max(0.0, d);
}

double js_divergence(const std::vector<cxd>& a, const std::vector<cxd>& b,
                     int bins) {
  return js_divergence(a, b, bins, jsd_support_box(a, b));
}

}  // namespace iscc
