#include "iscc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <Eigen/QR>

#include "iscc/metrics.hpp"
#include "iscc/qam.hpp"

namespace iscc {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

int nearest_point(cxd y, const std::vector<cxd>& points) {
  int best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    double d = std::norm(y - points[i]);
    if (d < bd) {
      bd = d;
      best = i;
    }
  }
  return best;
}

// receive-side constellation for user k: QAM grids are scaled by the solved
// dynamic range (or the bf amplitude); PSK decisions are scale-free
std::vector<cxd> rx_points_for_user(const MethodSolution& sol,
                                    const IsccProblem& pb, int k) {
  std::vector<cxd> pts = pb.constellation.points;
  if (pb.constellation.kind != ConstellationKind::Qam) return pts;
  double sr = 1.0, si = 1.0;
  if (sol.rx_scale.size() > 0) {
    sr = si = sol.rx_scale(k);
  } else if (sol.tau.size() >= 2 * (k + 1)) {
    sr = sol.tau(2 * k);
    si = sol.tau(2 * k + 1);
  }
  for (cxd& p : pts) p = cxd{sr * p.real(), si * p.imag()};
  return pts;
}

cxd ls_equalizer(const std::vector<cxd>& obs, const std::vector<cxd>& want) {
  cxd num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    num += std::conj(obs[i]) * want[i];
    den += std::norm(obs[i]);
  }
  if (den <= 0.0) return 0.0;
  return num / den;
}

double mu_for_user(const IsccProblem& pb, int k) {
  double sigma2 = pb.user_noise(k);
  int m = pb.constellation.order;
  if (pb.qos.epsilon) return qos_threshold_psk(*pb.qos.epsilon, sigma2, m);
  if (pb.qos.gamma) return qos_threshold_psk_snr(*pb.qos.gamma, sigma2, m);
  throw std::invalid_argument("QoS spec needs epsilon or gamma");
}

VecC fit_shaping_scales(const Waveform& w, const IsccProblem& pb) {
  const int k_t = static_cast<int>(pb.scene.targets.size());
  VecC d = VecC::Zero(k_t);
  for (int k = 0; k < k_t; ++k) {
    VecC a = steering_vector(pb.scene.targets[k].angle, pb.cfg.n_tx,
                             pb.cfg.spacing_ratio);
    VecC echo = (a.adjoint() * w.slots).transpose();
    VecC u = pb.aux.reference.row(k).transpose();
    double den = u.squaredNorm();
    if (den > 0.0) d(k) = u.dot(echo) / den;
  }
  return d;
}

double max_shape_residual(const Waveform& w, const IsccProblem& pb,
                          const VecC& d) {
  NoiseShapingAux aux = pb.aux;
  aux.scale = d;
  double worst = 0.0;
  for (int k = 0; k < static_cast<int>(pb.scene.targets.size()); ++k)
    worst = std::max(worst, noise_shaping_residual(w, pb.scene.targets[k], aux,
                                                   k, pb.cfg));
  return worst;
}

double min_scnr_over_targets(const Waveform& w, const IsccProblem& pb) {
  double best = std::numeric_limits<double>::infinity();
  for (const TargetSpec& t : pb.scene.targets)
    best = std::min(best, scnr(w, t, pb.cfg));
  return best;
}

}  // namespace

BfPrecoder bf_baseline(const IsccProblem& pb) {
  const SystemConfig& cfg = pb.cfg;
  const int n = cfg.n_tx;
  const int k_u = static_cast<int>(pb.scene.users.size());
  if (k_u > n)
    throw std::invalid_argument("zero-forcing needs at least as many antennas as users");
  const double p_slot = cfg.power / cfg.frame_len;

  BfPrecoder prec;
  prec.rx_scale = VecR::Zero(k_u);
  double p_comm = 0.0;
  MatC w0;
  if (k_u > 0) {
    const MatC& h = pb.channels.columns;
    MatC gram = h.adjoint() * h;
    w0 = gram.llt().solve(h.adjoint()).adjoint();  // h^H w0 = I
    double es = pb.constellation.mean_energy();
    for (int k = 0; k < k_u; ++k) {
      double c;
      if (pb.constellation.kind == ConstellationKind::Psk) {
        c = mu_for_user(pb, k) / std::sin(kPi / pb.constellation.order);
      } else {
        if (!pb.qos.epsilon)
          throw std::invalid_argument("QAM mode needs an explicit error ceiling");
        c = qam_bounds(*pb.qos.epsilon, pb.user_noise(k)).alpha;
      }
      prec.rx_scale(k) = c;
      p_comm += c * c * w0.col(k).squaredNorm() * es;
    }
    if (p_comm > p_slot) {
      prec.infeasible = true;
      double shrink = std::sqrt(p_slot / p_comm);
      prec.rx_scale *= shrink;
      p_comm = p_slot;
    }
    prec.user_columns = w0 * prec.rx_scale.asDiagonal();
  } else {
    prec.user_columns = MatC::Zero(n, 0);
  }

  double p_radar = std::max(0.0, p_slot - p_comm);
  prec.radar = VecC::Zero(n);
  double p_sense = 0.0;
  if (p_radar > 1e-12 && !pb.scene.targets.empty()) {
    MatC proj = MatC::Identity(n, n);
    if (k_u > 0) proj -= w0 * pb.channels.columns.adjoint();
    MatC s = MatC::Zero(n, n);
    for (const TargetSpec& t : pb.scene.targets) {
      VecC a = steering_vector(t.angle, n, cfg.spacing_ratio);
      s += a * a.adjoint();
    }
    MatC m = proj * s * proj.adjoint();
    Eigen::SelfAdjointEigenSolver<MatC> eig(m);
    if (eig.eigenvalues()(n - 1) > 1e-12) {
      VecC v = eig.eigenvectors().col(n - 1);
      v /= v.norm();
      if (k_u > 0) {
        // the beams are fixed over the block, so the sensing power has to
        // travel on a data stream; hang it on the first one
        double es = pb.constellation.mean_energy();
        prec.user_columns.col(0) += v * std::sqrt(p_radar / es);
      } else {
        prec.radar = v * std::sqrt(p_radar);
      }
      p_sense = p_radar;
    }
  }
  prec.per_slot_power = p_comm + p_sense;
  return prec;
}

Waveform bf_transmit(const BfPrecoder& prec, const MatC& symbols) {
  const int n = static_cast<int>(prec.radar.size());
  const int frame_len = static_cast<int>(symbols.cols());
  Waveform w;
  w.slots = prec.radar.replicate(1, frame_len);
  if (symbols.rows() > 0) w.slots += prec.user_columns * symbols;
  (void)n;
  return w;
}

IsccProblem make_problem(const ExperimentPlan& plan, std::uint64_t seed,
                         int point_index) {
  ExperimentPlan pt = plan.at_point(point_index);
  std::string tag = "[" + std::to_string(point_index) + "]";

  IsccProblem pb;
  pb.cfg = pt.cfg;
  pb.scene = pt.scene;
  pb.constellation = pt.constellation;
  pb.qos = pt.qos;
  pb.uncertainty = pt.uncertainty;

  RngStream chan_rng(seed, "chan" + tag);
  pb.channels = sample_rician_channels(pb.scene, pb.cfg, chan_rng);
  RngStream frame_rng(seed, "frame" + tag);
  pb.frame = draw_symbol_frame(pb.constellation,
                               static_cast<int>(pb.scene.users.size()),
                               pb.cfg.frame_len, frame_rng);
  RngStream shape_rng(seed, "shape" + tag);
  const int k_t = static_cast<int>(pb.scene.targets.size());
  pb.aux.reference = draw_noise_reference(k_t, pb.cfg.frame_len, shape_rng);
  // the covert reference must not echo the data: strip the frame's symbol
  // directions so a correlating receiver has nothing to lock onto
  if (pb.frame.symbols.rows() > 0 && k_t > 0) {
    MatC basis = pb.frame.symbols.transpose();  // L x K_U
    Eigen::HouseholderQR<MatC> qr(basis);
    MatC q = qr.householderQ() *
             MatC::Identity(pb.cfg.frame_len, basis.cols());
    for (int k = 0; k < k_t; ++k) {
      VecC u = pb.aux.reference.row(k).transpose();
      double scale = u.norm();
      u -= q * (q.adjoint() * u);
      if (u.norm() > 1e-12) u *= scale / u.norm();
      pb.aux.reference.row(k) = u.transpose();
    }
  }
  pb.aux.tolerance = VecR::Constant(k_t, pt.delta);
  pb.aux.scale = VecC::Zero(k_t);
  return pb;
}

MethodSolution solve_method(const std::string& method,
                            const ExperimentPlan& plan, const IsccProblem& pb) {
  MethodSolution sol;
  sol.method = method;
  const bool qam = pb.constellation.kind == ConstellationKind::Qam;
  if (method == "iscc") {
    SolveOutput out = plan.robust
                          ? (qam ? solve_robust_qam(pb, plan.solver)
                                 : solve_robust_psk(pb, plan.solver))
                          : (qam ? solve_iscc_qam(pb, plan.solver)
                                 : solve_iscc_psk(pb, plan.solver));
    sol.waveform = std::move(out.waveform);
    sol.tau = std::move(out.tau);
    sol.d = std::move(out.d);
    sol.report = std::move(out.report);
  } else if (method == "slp") {
    SolveOutput out = slp_baseline(pb, plan.solver);
    sol.waveform = std::move(out.waveform);
    sol.tau = std::move(out.tau);
    sol.report = std::move(out.report);
    sol.d = fit_shaping_scales(sol.waveform, pb);
    sol.report.residuals["shape"] = max_shape_residual(sol.waveform, pb, sol.d);
  } else if (method == "bf") {
    auto t0 = std::chrono::steady_clock::now();
    BfPrecoder prec = bf_baseline(pb);
    sol.waveform = bf_transmit(prec, pb.frame.symbols);
    sol.rx_scale = prec.rx_scale;
    sol.d = fit_shaping_scales(sol.waveform, pb);
    sol.report.converged = true;
    sol.report.feasible = !prec.infeasible;
    sol.report.infeasible = prec.infeasible;
    sol.report.min_scnr = min_scnr_over_targets(sol.waveform, pb);
    sol.report.grid_min_scnr = sol.report.min_scnr;
    sol.report.fine_grid_min_scnr = sol.report.min_scnr;
    sol.report.residuals["shape"] = max_shape_residual(sol.waveform, pb, sol.d);
    sol.report.notes = "heuristic baseline";
    sol.report.wall_ms = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - t0)
                             .count();
  } else {
    throw std::invalid_argument("unknown method: " + method);
  }
  return sol;
}

SerEstimate monte_carlo_ser(const MethodSolution& sol, const IsccProblem& pb,
                            long long trials, RngStream& rng) {
  SerEstimate est;
  const int k_u = static_cast<int>(pb.scene.users.size());
  const int frame_len = pb.cfg.frame_len;
  if (k_u == 0 || trials <= 0) return est;

  std::vector<std::vector<cxd>> rx(k_u);
  for (int k = 0; k < k_u; ++k) rx[k] = rx_points_for_user(sol, pb, k);
  MatC clean = pb.channels.columns.adjoint() * sol.waveform.slots;  // k_u x L
  VecR noise_amp(k_u);
  for (int k = 0; k < k_u; ++k) noise_amp(k) = std::sqrt(pb.user_noise(k));

  for (long long t = 0; t < trials; ++t) {
    int k = static_cast<int>(t % k_u);
    int l = static_cast<int>((t / k_u) % frame_len);
    cxd y = clean(k, l) + noise_amp(k) * rng.cnormal();
    if (nearest_point(y, rx[k]) != pb.frame.indices(k, l)) ++est.errors;
  }
  est.trials = trials;
  est.mean = static_cast<double>(est.errors) / static_cast<double>(trials);
  est.ci = wilson_interval(est.errors, trials);
  return est;
}

EveEstimate eavesdropper_eval(const MethodSolution& sol, const IsccProblem& pb,
                              double eve_noise_power, long long trials,
                              RngStream& rng) {
  EveEstimate est;
  const int k_t = static_cast<int>(pb.scene.targets.size());
  const int k_u = static_cast<int>(pb.scene.users.size());
  const int frame_len = pb.cfg.frame_len;
  const int m_points = pb.constellation.size();
  double amp = std::sqrt(eve_noise_power);

  est.per_target.resize(k_t);
  for (int kt = 0; kt < k_t; ++kt) {
    VecC a = steering_vector(pb.scene.targets[kt].angle, pb.cfg.n_tx,
                             pb.cfg.spacing_ratio);
    VecC clean = (a.adjoint() * sol.waveform.slots).transpose();
    // the shaping reference is the transmitter's own noise and goes out
    // fresh with every frame on the air, so the replay redraws it as well;
    // only the shaping residual repeats from pass to pass
    cxd dscale = sol.d.size() > kt ? sol.d(kt) : cxd(0.0);
    if (std::abs(dscale) > 0.0)
      clean -= dscale * pb.aux.reference.row(kt).transpose();

    std::vector<cxd> z(trials > 0 ? trials : 0);
    for (long long t = 0; t < trials; ++t) {
      z[t] = clean(t % frame_len) + amp * rng.cnormal();
      if (std::abs(dscale) > 0.0) z[t] += dscale * rng.cnormal();
    }
    // a constant pedestal (a static radar beam, say) carries no symbols;
    // any demodulating warden strips it before fitting an equalizer
    if (!z.empty()) {
      cxd pedestal = 0.0;
      for (cxd v : z) pedestal += v;
      pedestal /= static_cast<double>(z.size());
      for (cxd& v : z) v -= pedestal;
    }

    SerEstimate& ser = est.per_target[kt];
    ser.trials = trials * std::max(1, k_u);
    double uniform = 1.0 - 1.0 / m_points;
    if (k_u == 0 || trials == 0) {
      ser.mean = uniform;
      ser.errors = static_cast<long long>(uniform * ser.trials);
      ser.ci = wilson_interval(ser.errors, std::max<long long>(1, ser.trials));
      continue;
    }
    for (int k = 0; k < k_u; ++k) {
      // the genie refits once per frame pass and demodulates the next one,
      // the way a block receiver rides a block-constant channel estimate;
      // decodable structure survives the refit, while a symbol-free
      // waveform hands the next block an independent blind rotation
      std::vector<cxd> chunk, want;
      cxd g_prev = 0.0;
      bool have_prev = false;
      for (long long t0 = 0; t0 < trials; t0 += frame_len) {
        long long hi = std::min<long long>(trials, t0 + frame_len);
        chunk.assign(z.begin() + t0, z.begin() + hi);
        want.resize(chunk.size());
        for (long long t = t0; t < hi; ++t)
          want[t - t0] = pb.frame.symbols(k, t % frame_len);
        cxd g_fit = ls_equalizer(chunk, want);
        cxd g = have_prev ? g_prev : g_fit;
        g_prev = g_fit;
        have_prev = true;
        if (std::abs(g) <= 0.0) {
          ser.errors += static_cast<long long>(
              std::llround(uniform * static_cast<double>(hi - t0)));
          continue;
        }
        for (long long t = t0; t < hi; ++t)
          if (nearest_point(g * z[t], pb.constellation.points) !=
              pb.frame.indices(k, t % frame_len))
            ++ser.errors;
      }
    }
    ser.mean = static_cast<double>(ser.errors) / static_cast<double>(ser.trials);
    ser.ci = wilson_interval(ser.errors, ser.trials);
  }

  est.min_ser = 1.0;
  for (int kt = 0; kt < k_t; ++kt)
    if (est.per_target[kt].mean < est.min_ser) {
      est.min_ser = est.per_target[kt].mean;
      est.best_target = kt;
    }
  if (k_t == 0) est.min_ser = kNan;
  return est;
}

std::vector<cxd> user_samples(const MethodSolution& sol, const IsccProblem& pb,
                              int frame_passes, RngStream& rng) {
  const int k_u = static_cast<int>(pb.scene.users.size());
  const int frame_len = pb.cfg.frame_len;
  std::vector<cxd> out;
  if (k_u == 0 || frame_passes <= 0) return out;
  MatC clean = pb.channels.columns.adjoint() * sol.waveform.slots;

  for (int k = 0; k < k_u; ++k) {
    double amp = std::sqrt(pb.user_noise(k));
    std::vector<cxd> obs, want;
    obs.reserve(static_cast<std::size_t>(frame_passes) * frame_len);
    for (int pass = 0; pass < frame_passes; ++pass)
      for (int l = 0; l < frame_len; ++l) {
        obs.push_back(clean(k, l) + amp * rng.cnormal());
        want.push_back(pb.frame.symbols(k, l));
      }
    cxd g = ls_equalizer(obs, want);
    if (std::abs(g) <= 0.0) g = 1.0;
    for (cxd v : obs) out.push_back(g * v);
  }
  return out;
}

std::vector<cxd> eve_samples(const MethodSolution& sol, const IsccProblem& pb,
                             int target, double noise_power, int frame_passes,
                             RngStream& rng, bool equalized) {
  const int frame_len = pb.cfg.frame_len;
  std::vector<cxd> out;
  if (frame_passes <= 0) return out;
  VecC a = steering_vector(pb.scene.targets.at(target).angle, pb.cfg.n_tx,
                           pb.cfg.spacing_ratio);
  VecC clean = (a.adjoint() * sol.waveform.slots).transpose();
  double amp = std::sqrt(noise_power);
  // shaped designs redraw their reference noise per transmitted frame, so
  // the replayed passes do the same (see eavesdropper_eval)
  cxd dscale = sol.d.size() > target ? sol.d(target) : cxd(0.0);
  if (std::abs(dscale) > 0.0)
    clean -= dscale * pb.aux.reference.row(target).transpose();

  std::vector<cxd> want;
  out.reserve(static_cast<std::size_t>(frame_passes) * frame_len);
  for (int pass = 0; pass < frame_passes; ++pass)
    for (int l = 0; l < frame_len; ++l) {
      cxd v = clean(l) + amp * rng.cnormal();
      if (std::abs(dscale) > 0.0) v += dscale * rng.cnormal();
      out.push_back(v);
      if (equalized && !pb.scene.users.empty())
        want.push_back(pb.frame.symbols(0, l));
    }
  if (equalized && !want.empty()) {
    // same warden front end as the SER evaluation: pedestal off, then each
    // frame pass spun by the fit from the pass before it
    cxd pedestal = 0.0;
    for (cxd v : out) pedestal += v;
    pedestal /= static_cast<double>(out.size());
    for (cxd& v : out) v -= pedestal;
    std::vector<cxd> chunk, ref;
    cxd g_prev = 0.0;
    bool have_prev = false;
    for (std::size_t t0 = 0; t0 < out.size(); t0 += frame_len) {
      std::size_t hi = std::min(out.size(), t0 + frame_len);
      chunk.assign(out.begin() + t0, out.begin() + hi);
      ref.assign(want.begin() + t0, want.begin() + hi);
      cxd g_fit = ls_equalizer(chunk, ref);
      cxd g = have_prev ? g_prev : g_fit;
      g_prev = g_fit;
      have_prev = true;
      if (std::abs(g) > 0.0)
        for (std::size_t t = t0; t < hi; ++t) out[t] *= g;
    }
  }
  return out;
}

double jsd_vs_fitted_gaussian(const std::vector<cxd>& samples, RngStream& rng,
                              int bins) {
  if (samples.empty()) return 0.0;
  cxd mean = 0.0;
  for (cxd v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (cxd v : samples) var += std::norm(v - mean);
  var /= static_cast<double>(samples.size());
  double amp = std::sqrt(var);
  std::vector<cxd> gauss(samples.size());
  for (cxd& v : gauss) v = mean + amp * rng.cnormal();
  return js_divergence(samples, gauss, bins);
}

std::uint64_t frame_hash(const SymbolFrame& frame) {
  std::uint64_t h = 1469598103934665603ull;
  for (Eigen::Index k = 0; k < frame.indices.rows(); ++k)
    for (Eigen::Index l = 0; l < frame.indices.cols(); ++l) {
      std::uint64_t v = static_cast<std::uint64_t>(
          static_cast<std::uint32_t>(frame.indices(k, l)));
      for (int b = 0; b < 4; ++b) {
        h ^= (v >> (8 * b)) & 0xffu;
        h *= 1099511628211ull;
      }
    }
  return h;
}

namespace {

SerEstimate ser_solve_per_frame(const std::string& method,
                                const ExperimentPlan& plan,
                                const IsccProblem& pb, long long trials,
                                RngStream& rng) {
  SerEstimate est;
  const int k_u = static_cast<int>(pb.scene.users.size());
  const int frame_len = pb.cfg.frame_len;
  if (k_u == 0 || trials <= 0) return est;
  long long per_frame = static_cast<long long>(k_u) * frame_len;

  while (est.trials < trials) {
    IsccProblem fpb = pb;
    fpb.frame = draw_symbol_frame(pb.constellation, k_u, frame_len, rng);
    MethodSolution sol = solve_method(method, plan, fpb);
    MatC clean = fpb.channels.columns.adjoint() * sol.waveform.slots;
    long long want = std::min<long long>(per_frame, trials - est.trials);
    for (long long t = 0; t < want; ++t) {
      int k = static_cast<int>(t % k_u);
      int l = static_cast<int>((t / k_u) % frame_len);
      cxd y = clean(k, l) +
              std::sqrt(fpb.user_noise(k)) * rng.cnormal();
      std::vector<cxd> pts = rx_points_for_user(sol, fpb, k);
      if (nearest_point(y, pts) != fpb.frame.indices(k, l)) ++est.errors;
    }
    est.trials += want;
  }
  est.mean = static_cast<double>(est.errors) / static_cast<double>(est.trials);
  est.ci = wilson_interval(est.errors, est.trials);
  return est;
}

struct JobOutcome {
  bool ok = false;
  std::string error;
  MetricsRow row;
  json report;
  std::string trace_csv;
  std::string constellation_csv;
  std::string waveform_csv;
  std::vector<std::string> beampattern_rows;  // only for the first point
  double wall_ms = 0.0;
};

std::string waveform_to_csv(const Waveform& w) {
  std::ostringstream os;
  os << "slot,antenna,re,im\n";
  for (int l = 0; l < w.frame_len(); ++l)
    for (int i = 0; i < w.n_tx(); ++i)
      os << l << ',' << i << ',' << format_double(w.slots(i, l).real()) << ','
         << format_double(w.slots(i, l).imag()) << '\n';
  return os.str();
}

JobOutcome run_job(const ExperimentPlan& plan, const ExperimentPlan& pt_plan,
                   const IsccProblem& pb, int point, const std::string& method) {
  JobOutcome out;
  auto t0 = std::chrono::steady_clock::now();
  std::string tag = "[" + std::to_string(point) + "]";

  MethodSolution sol = solve_method(method, pt_plan, pb);

  SerEstimate ser;
  EveEstimate eve;
  std::vector<cxd> us, es;
  double jsd = kNan;
  if (plan.trials > 0) {
    RngStream mc_rng(plan.seed, "mc" + tag);
    ser = plan.solve_per_frame && method != "bf"
              ? ser_solve_per_frame(method, pt_plan, pb, plan.trials, mc_rng)
              : monte_carlo_ser(sol, pb, plan.trials, mc_rng);
    RngStream eve_rng(plan.seed, "eve" + tag);
    eve = eavesdropper_eval(sol, pb, plan.eve_noise_power, plan.trials,
                            eve_rng);
    RngStream du_rng(plan.seed, "dumpu" + tag);
    us = user_samples(sol, pb, plan.constellation_frames, du_rng);
    RngStream de_rng(plan.seed, "dumpe" + tag);
    es = eve_samples(sol, pb, eve.best_target, plan.eve_noise_power,
                     plan.constellation_frames, de_rng, true);
    if (!us.empty() && !es.empty()) jsd = js_divergence(us, es);
  } else {
    ser.mean = kNan;
    ser.ci = {kNan, kNan};
    eve.min_ser = kNan;
  }

  MetricsRow& row = out.row;
  row.point = plan.point_value(point);
  row.method = method;
  row.min_scnr = sol.report.min_scnr;
  row.ser_user = ser;
  row.ser_eve_min = eve.min_ser;
  row.jsd = jsd;
  row.solve_ms = static_cast<double>(sol.report.inner_iters_total);
  row.frame_digest = frame_hash(pb.frame);
  row.feasible = sol.report.feasible;

  out.report = report_to_json(sol.report,
                              sol.tau.size() > 0 ? &sol.tau : nullptr);
  out.report["method"] = method;
  out.report["point"] = row.point;
  out.report["frame_hash"] = row.frame_digest;

  {
    std::ostringstream os;
    write_trace_csv(os, sol.report.inner_trace);
    out.trace_csv = os.str();
  }
  {
    std::ostringstream os;
    os << "re,im,role\n";
    for (cxd v : us)
      os << format_double(v.real()) << ',' << format_double(v.imag())
         << ",user\n";
    for (cxd v : es)
      os << format_double(v.real()) << ',' << format_double(v.imag())
         << ",eve\n";
    out.constellation_csv = os.str();
  }
  out.waveform_csv = waveform_to_csv(sol.waveform);

  if (point == 0) {
    std::vector<double> angles;
    for (int i = -180; i <= 180; ++i) angles.push_back(deg2rad(0.5 * i));
    auto tx = beampattern(sol.waveform, angles, pb.cfg, pb.scene,
                          BeampatternMode::TxPower);
    auto echo = beampattern(sol.waveform, angles, pb.cfg, pb.scene,
                            BeampatternMode::EchoScnr);
    for (std::size_t i = 0; i < angles.size(); ++i) {
      std::ostringstream os;
      os << format_double(rad2deg(angles[i])) << ','
         << format_double(tx[i].value) << ',' << format_double(echo[i].value)
         << ',' << method;
      out.beampattern_rows.push_back(os.str());
    }
  }

  out.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  out.ok = true;
  return out;
}

json row_to_json(const MetricsRow& row) {
  json j;
  j["point"] = row.point;
  j["method"] = row.method;
  j["min_scnr"] = row.min_scnr;
  j["ser_user_mean"] = row.ser_user.mean;
  j["ser_user_ci_lo"] = row.ser_user.ci.lo;
  j["ser_user_ci_hi"] = row.ser_user.ci.hi;
  j["ser_eve_min"] = row.ser_eve_min;
  j["jsd"] = row.jsd;
  j["solve_ms"] = row.solve_ms;
  j["frame_hash"] = row.frame_digest;
  j["feasible"] = row.feasible;
  j["ser_user_errors"] = row.ser_user.errors;
  j["ser_user_trials"] = row.ser_user.trials;
  return j;
}

MetricsRow row_from_json(const json& j) {
  MetricsRow row;
  row.point = j.at("point").get<double>();
  row.method = j.at("method").get<std::string>();
  row.min_scnr = j.at("min_scnr").get<double>();
  row.ser_user.mean = j.at("ser_user_mean").get<double>();
  row.ser_user.ci.lo = j.at("ser_user_ci_lo").get<double>();
  row.ser_user.ci.hi = j.at("ser_user_ci_hi").get<double>();
  row.ser_eve_min = j.at("ser_eve_min").get<double>();
  row.jsd = j.at("jsd").get<double>();
  row.solve_ms = j.at("solve_ms").get<double>();
  row.frame_digest = j.at("frame_hash").get<std::uint64_t>();
  row.feasible = j.at("feasible").get<bool>();
  row.ser_user.errors = j.value("ser_user_errors", 0ll);
  row.ser_user.trials = j.value("ser_user_trials", 0ll);
  return row;
}

std::string metrics_line(const MetricsRow& row) {
  std::ostringstream os;
  os << format_double(row.point) << ',' << row.method << ','
     << format_double(row.min_scnr) << ',' << format_double(row.ser_user.mean)
     << ',' << format_double(row.ser_user.ci.lo) << ','
     << format_double(row.ser_user.ci.hi) << ','
     << format_double(row.ser_eve_min) << ',' << format_double(row.jsd) << ','
     << format_double(row.solve_ms);
  return os.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

}  // namespace

EvalResult run_experiment(const ExperimentPlan& plan_in,
                          const std::string& out_dir) {
  ExperimentPlan plan = plan_in;
  if (const char* s = std::getenv("ISCC_SEED"))
    plan.seed = std::strtoull(s, nullptr, 10);
  unsigned threads = std::thread::hardware_concurrency();
  if (threads == 0) threads = 1;
  if (const char* s = std::getenv("ISCC_THREADS")) {
    long v = std::strtol(s, nullptr, 10);
    if (v >= 1) threads = static_cast<unsigned>(v);
  }

  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  const fs::path manifest_path = dir / "manifest.json";

  json plan_json = plan_to_json(plan);
  json manifest;
  if (fs::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    try {
      manifest = json::parse(in);
    } catch (...) {
      manifest = json::object();
    }
    if (!manifest.contains("plan") || manifest["plan"] != plan_json)
      manifest = json::object();
  }
  manifest["plan"] = plan_json;
  if (!manifest.contains("jobs")) manifest["jobs"] = json::object();

  const int n_points = static_cast<int>(plan.n_points());
  std::vector<ExperimentPlan> pt_plans;
  std::vector<IsccProblem> problems;
  pt_plans.reserve(n_points);
  problems.reserve(n_points);
  for (int p = 0; p < n_points; ++p) {
    pt_plans.push_back(plan.at_point(p));
    problems.push_back(make_problem(plan, plan.seed, p));
  }

  struct Job {
    int point;
    std::string method;
  };
  std::vector<Job> jobs;
  for (int p = 0; p < n_points; ++p)
    for (const std::string& m : plan.methods) jobs.push_back({p, m});

  std::atomic<std::size_t> next{0};
  std::mutex mu;

  auto worker = [&]() {
    for (;;) {
      std::size_t i = next.fetch_add(1);
      if (i >= jobs.size()) return;
      const Job& job = jobs[i];
      std::string key =
          std::to_string(job.point) + ":" + job.method;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (manifest["jobs"].contains(key) &&
            manifest["jobs"][key].value("status", "") == "ok")
          continue;
      }
      JobOutcome outcome;
      try {
        outcome = run_job(plan, pt_plans[job.point], problems[job.point],
                          job.point, job.method);
      } catch (const std::exception& e) {
        outcome.ok = false;
        outcome.error = e.what();
      }
      std::lock_guard<std::mutex> lock(mu);
      json& entry = manifest["jobs"][key];
      if (outcome.ok) {
        entry["status"] = "ok";
        entry["row"] = row_to_json(outcome.row);
        entry["wall_ms"] = outcome.wall_ms;
        entry["beampattern"] = outcome.beampattern_rows;
        std::string suffix =
            "_" + std::to_string(job.point) + "_" + job.method;
        write_file(dir / ("trace_" + std::to_string(job.point) + "_" +
                          job.method + ".csv"),
                   outcome.trace_csv);
        write_file(
            dir / ("constellation_" + job.method + "_" +
                   std::to_string(job.point) + ".csv"),
            outcome.constellation_csv);
        write_file(dir / ("waveform_" + job.method + "_" +
                          std::to_string(job.point) + ".csv"),
                   outcome.waveform_csv);
        write_file(dir / ("report" + suffix + ".json"),
                   outcome.report.dump(2) + "\n");
      } else {
        entry["status"] = "failed";
        entry["error"] = outcome.error;
      }
      write_file(manifest_path, manifest.dump(2) + "\n");
    }
  };

  std::vector<std::thread> pool;
  unsigned n_workers =
      std::min<unsigned>(threads, static_cast<unsigned>(jobs.size()));
  for (unsigned t = 0; t + 1 < n_workers; ++t) pool.emplace_back(worker);
  worker();
  for (std::thread& t : pool) t.join();

  EvalResult result;
  std::string metrics =
      "point,method,min_scnr,ser_user_mean,ser_user_ci_lo,ser_user_ci_hi,"
      "ser_eve_min,jsd,solve_ms\n";
  std::string beampattern_csv = "angle_deg,tx_power,echo_scnr,method\n";
  for (const Job& job : jobs) {
    std::string key = std::to_string(job.point) + ":" + job.method;
    const json& entry = manifest["jobs"][key];
    if (entry.value("status", "") != "ok") continue;
    MetricsRow row = row_from_json(entry.at("row"));
    metrics += metrics_line(row) + "\n";
    result.rows.push_back(std::move(row));
    if (entry.contains("beampattern"))
      for (const json& line : entry.at("beampattern"))
        beampattern_csv += line.get<std::string>() + "\n";
  }
  write_file(dir / "metrics.csv", metrics);
  write_file(dir / "beampattern.csv", beampattern_csv);
  write_file(manifest_path, manifest.dump(2) + "\n");
  return result;
}

}  // namespace iscc
