#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "iscc/metrics.hpp"
#include "iscc/rng.hpp"
#include "iscc/stats.hpp"
#include "support/oracles.hpp"

using namespace iscc;

namespace {

Waveform aligned_waveform(const SystemConfig& cfg, double angle) {
  VecC a = steering_vector(angle, cfg.n_tx, cfg.spacing_ratio);
  Waveform x;
  x.slots = std::sqrt(cfg.power / cfg.frame_len) *
            a * Eigen::RowVectorXcd::Ones(cfg.frame_len);
  return x;
}

Waveform random_waveform(const SystemConfig& cfg, RngStream& rng,
                         double power) {
  Waveform x;
  x.slots.resize(cfg.n_tx, cfg.frame_len);
  for (int i = 0; i < cfg.n_tx; ++i)
    for (int l = 0; l < cfg.frame_len; ++l) x.slots(i, l) = rng.cnormal();
  x.slots *= std::sqrt(power) / x.slots.norm();
  return x;
}

}  // namespace

TEST_CASE("scnr of an aligned clutter-free waveform is P*rcs/noise") {
  SystemConfig cfg;
  cfg.n_tx = 6;
  cfg.n_rx = 5;
  cfg.frame_len = 8;
  cfg.power = 20.0;
  cfg.rx_noise_power = 2.0;
  TargetSpec t;
  t.angle = 0.4;
  t.rcs = 3.0;
  Waveform x = aligned_waveform(cfg, t.angle);
  CHECK(scnr(x, t, cfg) ==
        doctest::Approx(cfg.power * t.rcs / cfg.rx_noise_power).epsilon(1e-12));

  Waveform zero;
  zero.slots = MatC::Zero(cfg.n_tx, cfg.frame_len);
  CHECK(scnr(zero, t, cfg) == doctest::Approx(0.0));
}

TEST_CASE("scnr matches the dense-covariance route") {
  RngStream rng(10, "scnr");
  for (int trial = 0; trial < 12; ++trial) {
    SystemConfig cfg;
    cfg.n_tx = 3;
    cfg.n_rx = 3;
    cfg.frame_len = 2 + trial % 3;
    cfg.power = 5.0;
    TargetSpec t;
    t.angle = (rng.uniform() - 0.5) * kPi;
    t.rcs = 0.5 + rng.uniform();
    int nc = trial % 4;
    for (int c = 0; c < nc; ++c)
      t.clutter.push_back({(rng.uniform() - 0.5) * kPi, 0.3 + rng.uniform()});
    Waveform x = random_waveform(cfg, rng, cfg.power);
    double fast = scnr(x, t, cfg);
    double dense = oracle::scnr_dense(x, t, cfg);
    CHECK(fast == doctest::Approx(dense).epsilon(1e-9));
  }
}

TEST_CASE("scnr is invariant to a common phase and hurt by clutter") {
  RngStream rng(11, "phase");
  SystemConfig cfg;
  cfg.n_tx = 4;
  cfg.n_rx = 4;
  cfg.frame_len = 4;
  TargetSpec t;
  t.angle = -0.3;
  t.clutter = {{0.6, 1.0}, {-0.8, 0.7}};
  Waveform x = random_waveform(cfg, rng, 8.0);
  double base = scnr(x, t, cfg);
  Waveform y = x;
  y.slots *= std::polar(1.0, 1.234);
  CHECK(scnr(y, t, cfg) == doctest::Approx(base).epsilon(1e-10));

  TargetSpec clean = t;
  clean.clutter.clear();
  CHECK(base <= scnr(x, clean, cfg) + 1e-12);
}

TEST_CASE("detection probability endpoints and monotonicity") {
  CHECK(detection_probability(0.0, 0.05) == doctest::Approx(0.05).epsilon(1e-12));
  for (double s : {0.3, 2.0, 9.0})
    CHECK(detection_probability(s, 0.5) ==
          doctest::Approx(gaussian_q(-std::sqrt(s))).epsilon(1e-12));
  double prev = 0.0;
  for (double s = 0.0; s <= 20.0; s += 0.5) {
    double pd = detection_probability(s, 1e-4);
    CHECK(pd >= prev - 1e-14);
    prev = pd;
  }
  CHECK_THROWS_AS(detection_probability(1.0, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(detection_probability(1.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(detection_probability(1.0, -0.1), std::invalid_argument);
}

TEST_CASE("psk margin closed forms and the rotated-pair identity") {
  VecC h = VecC::Zero(3);
  h(0) = 1.0;
  VecC x = VecC::Zero(3);

  x(0) = 1.0;
  CHECK(psk_safety_margin(x, h, cxd(1.0, 0.0), 4) == doctest::Approx(1.0));
  x(0) = cxd(0.0, 1.0);
  CHECK(psk_safety_margin(x, h, cxd(1.0, 0.0), 4) == doctest::Approx(-1.0));

  RngStream rng(12, "pair");
  for (int m : {4, 8, 16})
    for (int t = 0; t < 20; ++t) {
      cxd w = rng.cnormal();
      cxd s = std::polar(1.0, 2.0 * kPi * rng.uniform_int(m) / m);
      VecC hh = VecC::Zero(2), xx = VecC::Zero(2);
      hh(0) = 1.0;
      xx(0) = w * s;  // so h^H x conj(s) = w
      RotatedPair rot = psk_rotated_pair(s, m);
      double lhs = std::min(std::real(rot.tilt * (hh.dot(xx))),
                            std::real(rot.bar * (hh.dot(xx))));
      double rhs = std::sin(kPi / m) * psk_safety_margin(xx, hh, s, m);
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
}

TEST_CASE("sep bound endpoints and threshold consistency") {
  CHECK(psk_sep_bound(0.0, 1.0, 4) == doctest::Approx(1.0));
  CHECK(psk_sep_bound(1e6, 1.0, 4) == doctest::Approx(0.0));
  CHECK(psk_sep_bound(-3.0, 1.0, 8) == doctest::Approx(1.0));

  for (double eps : {0.2, 0.05, 1e-3})
    for (double np : {0.5, 1.0, 2.0})
      for (int m : {4, 8}) {
        double mu = qos_threshold_psk(eps, np, m);
        double beta = mu / std::sin(kPi / m);
        CHECK(psk_sep_bound(beta, np, m) == doctest::Approx(eps).epsilon(1e-9));
      }
}

TEST_CASE("qos thresholds reference values") {
  CHECK(qos_threshold_psk(1.0, 1.0, 4) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(qos_threshold_psk(0.0455, 1.0, 4) ==
        doctest::Approx(1.4142152904710774).epsilon(1e-3));
  CHECK(qos_threshold_psk_snr(10.0, 1.0, 4) ==
        doctest::Approx(std::sin(kPi / 4) * std::sqrt(10.0)).epsilon(1e-12));
  CHECK(qos_threshold_psk(1e-3, 2.0, 4) >
        qos_threshold_psk(1e-2, 2.0, 4));
}

TEST_CASE("tx beampattern peaks at the aligned angle") {
  SystemConfig cfg;
  cfg.n_tx = 8;
  cfg.n_rx = 8;
  cfg.frame_len = 4;
  cfg.power = 12.0;
  Scene scene;
  double angle = 0.25;
  Waveform x = aligned_waveform(cfg, angle);
  auto bp = beampattern(x, {angle}, cfg, scene, BeampatternMode::TxPower);
  CHECK(bp[0].value ==
        doctest::Approx(cfg.power / cfg.frame_len).epsilon(1e-10));

  // isotropic average over random waveforms is ||x||^2 / (L * n_tx)
  RngStream rng(13, "iso");
  double acc = 0.0;
  const int draws = 4000;
  for (int i = 0; i < draws; ++i) {
    Waveform w = random_waveform(cfg, rng, cfg.power);
    acc += beampattern(w, {0.1}, cfg, scene, BeampatternMode::TxPower)[0].value;
  }
  double expect = cfg.power / (cfg.frame_len * cfg.n_tx);
  CHECK(acc / draws == doctest::Approx(expect).epsilon(0.05));
}

TEST_CASE("echo beampattern matches a clutter-free probe") {
  SystemConfig cfg;
  cfg.n_tx = 4;
  cfg.n_rx = 4;
  cfg.frame_len = 3;
  cfg.rx_noise_power = 0.8;
  Scene scene;  // no targets, so no clutter union
  RngStream rng(14, "echo");
  Waveform x = random_waveform(cfg, rng, 6.0);
  double probe_angle = -0.15;
  auto bp = beampattern(x, {probe_angle}, cfg, scene, BeampatternMode::EchoScnr);
  VecC a = steering_vector(probe_angle, cfg.n_tx);
  double acc = 0.0;
  for (int l = 0; l < cfg.frame_len; ++l) acc += std::norm(a.dot(x.slots.col(l)));
  CHECK(bp[0].value == doctest::Approx(acc / cfg.rx_noise_power).epsilon(1e-10));
}

TEST_CASE("jsd basic properties") {
  RngStream rng(15, "jsd");
  std::vector<cxd> a, b, c;
  for (int i = 0; i < 10000; ++i) {
    cxd z = rng.cnormal();
    a.push_back(z);
    b.push_back(cxd(5.0, 5.0) + 0.01 * rng.cnormal());
    c.push_back(0.7 * rng.cnormal() + cxd(0.3, -0.2));
  }
  CHECK(js_divergence(a, a) <= 1e-12);
  // smoothing of 0.5 per bin leaves ~5% shared mass at 10k samples, so the
  // disjoint-cloud divergence sits a little under log 2
  double far = js_divergence(a, b);
  CHECK(far > 0.9 * std::log(2.0));
  CHECK(far <= std::log(2.0) + 1e-12);
  double ab = js_divergence(a, c);
  double ba = js_divergence(c, a);
  CHECK(ab == doctest::Approx(ba).epsilon(1e-12));
  CHECK(ab >= 0.0);
}

TEST_CASE("noise shaping residual closed forms") {
  SystemConfig cfg;
  cfg.n_tx = 4;
  cfg.n_rx = 4;
  cfg.frame_len = 5;
  TargetSpec t;
  t.angle = 0.3;
  RngStream rng(16, "shape");

  NoiseShapingAux aux;
  aux.reference.resize(1, cfg.frame_len);
  for (int l = 0; l < cfg.frame_len; ++l) aux.reference(0, l) = rng.cnormal();
  aux.scale = VecC::Constant(1, cxd(1.3, -0.4));
  aux.tolerance = VecR::Constant(1, 0.1);

  // exact fit: choose x_l so a^H x_l equals d * u_l
  VecC a = steering_vector(t.angle, cfg.n_tx);
  Waveform fit;
  fit.slots.resize(cfg.n_tx, cfg.frame_len);
  for (int l = 0; l < cfg.frame_len; ++l)
    fit.slots.col(l) = a * (aux.scale(0) * aux.reference(0, l));
  CHECK(noise_shaping_residual(fit, t, aux, 0, cfg) ==
        doctest::Approx(0.0).epsilon(1e-12));

  Waveform x = random_waveform(cfg, rng, 4.0);
  double got = noise_shaping_residual(x, t, aux, 0, cfg);
  double manual = 0.0;
  for (int l = 0; l < cfg.frame_len; ++l)
    manual += std::norm(a.dot(x.slots.col(l)) -
                        aux.scale(0) * aux.reference(0, l));
  CHECK(got == doctest::Approx(manual / cfg.frame_len).epsilon(1e-12));
}
