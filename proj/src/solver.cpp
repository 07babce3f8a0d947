#include "iscc/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <memory>
#include <stdexcept>

#include <Eigen/QR>

#include "iscc/projections.hpp"
#include "iscc/qam.hpp"
#include "iscc/robust.hpp"
#include "iscc/surrogate.hpp"

namespace iscc {

RotatedSymbols rotate_symbols(const MatC& symbols, int m) {
  double s = std::sin(kPi / m), c = std::cos(kPi / m);
  RotatedSymbols r;
  r.tilt = symbols.conjugate() * cxd{s, c};
  r.bar = symbols.conjugate() * cxd{s, -c};
  return r;
}

namespace {

struct Mode {
  bool qam = false;
  bool robust = false;
  bool covert = true;
};

struct Assembly {
  std::vector<ProjectionSet> sets;          // surrogates first
  int n_surrogates = 0;
  std::vector<std::vector<double>> grids;   // per target: look angles
  std::vector<std::shared_ptr<const VecC>> margin_dirs;  // 2 per (k, l)
  VecR mu;                                   // PSK thresholds
  VecR alpha, beta;                          // QAM bounds
  std::shared_ptr<const std::vector<QamAxisProblem>> axis_problems;
  std::shared_ptr<const ChannelCoupling> coupling;
  std::vector<int> polish_order;             // indices into sets, power last
};

double qos_epsilon_or_throw(const QosSpec& qos) {
  if (qos.epsilon) return *qos.epsilon;
  throw std::invalid_argument("QAM mode needs an explicit error ceiling");
}

VecR psk_thresholds(const IsccProblem& pb) {
  const int k_u = static_cast<int>(pb.scene.users.size());
  const int m = pb.constellation.order;
  VecR mu(k_u);
  for (int k = 0; k < k_u; ++k) {
    double sigma2 = pb.user_noise(k);
    if (pb.qos.epsilon)
      mu(k) = qos_threshold_psk(*pb.qos.epsilon, sigma2, m);
    else if (pb.qos.gamma)
      mu(k) = qos_threshold_psk_snr(*pb.qos.gamma, sigma2, m);
    else
      throw std::invalid_argument("QoS spec needs epsilon or gamma");
  }
  return mu;
}

Assembly assemble_static(const IsccProblem& pb, const Mode& mode) {
  Assembly as;
  const SystemConfig& cfg = pb.cfg;
  const int n_tx = cfg.n_tx, L = cfg.frame_len;
  const int k_u = static_cast<int>(pb.scene.users.size());
  const int k_t = static_cast<int>(pb.scene.targets.size());
  const double eps_u = mode.robust ? pb.uncertainty.eps_user : 0.0;

  as.grids.resize(k_t);
  for (int k = 0; k < k_t; ++k)
    as.grids[k] = mode.robust
                      ? angle_grid(pb.scene.targets[k].angle,
                                   pb.uncertainty.eps_target,
                                   pb.uncertainty.grid_size,
                                   pb.uncertainty.grid_kind)
                      : std::vector<double>{pb.scene.targets[k].angle};

  std::vector<ProjectionSet>& sets = as.sets;

  if (!mode.qam) {
    as.mu = psk_thresholds(pb);
    RotatedSymbols rot = rotate_symbols(pb.frame.symbols, pb.constellation.order);
    for (int k = 0; k < k_u; ++k) {
      const VecC h = pb.channels.columns.col(k);
      if (h.norm() <= 0.0)
        throw std::invalid_argument("zero channel vector");
      for (int l = 0; l < L; ++l)
        for (int side = 0; side < 2; ++side) {
          cxd rs = side == 0 ? rot.tilt(k, l) : rot.bar(k, l);
          auto g = std::make_shared<VecC>(h * std::conj(rs));
          as.margin_dirs.push_back(g);
          std::string label = "sep[" + std::to_string(k) + "," +
                              std::to_string(l) + (side == 0 ? ",t]" : ",b]");
          sets.push_back(
              mode.robust
                  ? make_robust_margin_set(label, g, eps_u, as.mu(k), l, n_tx)
                  : make_margin_set(label, g, as.mu(k), l, n_tx));
        }
    }
  } else {
    double eps = qos_epsilon_or_throw(pb.qos);
    as.alpha.resize(k_u);
    as.beta.resize(k_u);
    for (int k = 0; k < k_u; ++k) {
      QamCellBounds b = qam_bounds(eps, pb.user_noise(k));
      as.alpha(k) = b.alpha;
      as.beta(k) = b.beta;
    }
    as.axis_problems = std::make_shared<const std::vector<QamAxisProblem>>(
        qam_axis_problems(pb.frame.symbols, pb.constellation.order, as.alpha,
                          as.beta));
    sets.push_back(make_qam_margin_set(as.axis_problems, k_u, L, eps_u));
    as.coupling = std::make_shared<const ChannelCoupling>(
        make_channel_coupling(pb.channels));
    for (int l = 0; l < L; ++l)
      sets.push_back(make_coupling_set(as.coupling, l, n_tx, k_u));
  }

  if (mode.robust)
    for (int l = 0; l < L; ++l) sets.push_back(make_norm_cone_set(l, n_tx));

  if (mode.covert) {
    // a per-slot budget below the receiver noise floor asks the probed
    // response to pass for noise, so besides the mean-square ball the
    // symbol-correlated component is nulled outright; looser budgets only
    // shape the envelope and keep that freedom to spend on the objective
    MatC sym;
    if (k_u > 0 && k_t > 0) {
      Eigen::HouseholderQR<MatC> qr(pb.frame.symbols.transpose());
      sym = qr.householderQ() * MatC::Identity(L, k_u);
    }
    for (int k = 0; k < k_t; ++k) {
      bool strict = sym.cols() > 0 && pb.aux.tolerance(k) < cfg.rx_noise_power;
      for (double ang : as.grids[k]) {
        auto op = std::make_shared<NoiseShapeOp>();
        op->a = steering_vector(ang, n_tx, cfg.spacing_ratio);
        op->u = pb.aux.reference.row(k).transpose();
        if (strict) {
          op->sym = sym;
          op->u -= sym * (sym.adjoint() * op->u);  // center in the same slice
        }
        op->budget = L * pb.aux.tolerance(k);
        op->d_index = k;
        sets.push_back(
            make_noise_shape_set("shape[" + std::to_string(k) + "]", op, n_tx));
      }
    }
  }

  sets.push_back(make_power_set(cfg.power));

  // cyclic feasibility order: everything, energy ball last
  for (std::size_t i = 0; i < sets.size(); ++i)
    if (sets[i].label != "power") as.polish_order.push_back(static_cast<int>(i));
  as.polish_order.push_back(static_cast<int>(sets.size()) - 1);
  return as;
}

DecisionPoint initial_point(const IsccProblem& pb, const Mode& mode,
                            const Assembly& as) {
  const SystemConfig& cfg = pb.cfg;
  const int n_tx = cfg.n_tx, L = cfg.frame_len;
  const int k_u = static_cast<int>(pb.scene.users.size());
  const int k_t = static_cast<int>(pb.scene.targets.size());

  VecC dir = VecC::Zero(n_tx);
  for (const TargetSpec& t : pb.scene.targets)
    dir += steering_vector(t.angle, n_tx, cfg.spacing_ratio);
  if (dir.norm() < 1e-9 && k_t > 0)
    dir = steering_vector(pb.scene.targets[0].angle, n_tx, cfg.spacing_ratio);
  if (dir.norm() < 1e-9) dir = VecC::Ones(n_tx);
  VecC slot = std::sqrt(cfg.power / L) * dir / dir.norm();

  DecisionPoint p;
  p.x.resize(n_tx * L);
  for (int l = 0; l < L; ++l) p.x.segment(l * n_tx, n_tx) = slot;
  p.d = VecC::Zero(k_t);

  if (mode.qam) {
    p.upsilon.resize(k_u * L);
    MatC slots = Eigen::Map<const MatC>(p.x.data(), n_tx, L);
    MatC ups = as.coupling->h * slots;  // k_u x L
    p.upsilon = Eigen::Map<const VecC>(ups.data(), ups.size());
    p.tau.resize(2 * k_u);
    for (int k = 0; k < k_u; ++k)
      for (int axis = 0; axis < 2; ++axis) {
        const QamAxisProblem& pbx = (*as.axis_problems)[2 * k + axis];
        double num = 0.0, den = 0.0, floor_tau = 0.0;
        for (int l = 0; l < L; ++l) {
          cxd u = p.upsilon(l * k_u + k);
          double v = axis == 0 ? u.real() : u.imag();
          num += pbx.s(l) * v;
          den += pbx.s(l) * pbx.s(l);
          if (pbx.a_finite[l] && pbx.c_finite[l])
            floor_tau = std::max(floor_tau, 0.5 * (pbx.a(l) + pbx.c(l)));
        }
        double fit = den > 0.0 ? num / den : 0.0;
        p.tau(2 * k + axis) = std::max(fit, floor_tau + 0.1);
      }
  }
  if (mode.robust) {
    p.r.resize(L);
    for (int l = 0; l < L; ++l) p.r(l) = p.x.segment(l * n_tx, n_tx).norm();
  }
  return p;
}

struct SurrogateBatch {
  std::vector<std::shared_ptr<const SurrogateData>> data;
  std::vector<ProjectionSet> sets;
};

SurrogateBatch build_surrogates(const IsccProblem& pb, const Assembly& as,
                                const Waveform& ref) {
  SurrogateBatch batch;
  const int k_t = static_cast<int>(pb.scene.targets.size());
  for (int k = 0; k < k_t; ++k)
    for (double ang : as.grids[k]) {
      auto d = std::make_shared<SurrogateData>(
          build_surrogate_at(ref, pb.scene.targets[k], pb.cfg, ang));
      batch.data.push_back(d);
      batch.sets.push_back(
          make_surrogate_set("scnr[" + std::to_string(k) + "]", d));
    }
  return batch;
}

double true_min_scnr(const IsccProblem& pb, const Assembly& as,
                     const Waveform& w) {
  double best = std::numeric_limits<double>::infinity();
  const int k_t = static_cast<int>(pb.scene.targets.size());
  for (int k = 0; k < k_t; ++k)
    for (double ang : as.grids[k]) {
      TargetSpec probe = pb.scene.targets[k];
      probe.angle = ang;
      best = std::min(best, scnr(w, probe, pb.cfg));
    }
  return best;
}

double fine_grid_min_scnr(const IsccProblem& pb, const SolverOptions& opts,
                          const Waveform& w) {
  double best = std::numeric_limits<double>::infinity();
  for (const TargetSpec& t : pb.scene.targets) {
    std::vector<double> grid =
        pb.uncertainty.eps_target > 0.0
            ? angle_grid(t.angle, pb.uncertainty.eps_target,
                         opts.validation_grid_factor *
                                 std::max(1, pb.uncertainty.grid_size - 1) +
                             1,
                         GridKind::Uniform)
            : std::vector<double>{t.angle};
    for (double ang : grid) {
      TargetSpec probe = t;
      probe.angle = ang;
      best = std::min(best, scnr(w, probe, pb.cfg));
    }
  }
  return best;
}

void polish_feasible(const Assembly& as, const std::vector<ProjectionSet>& all,
                     DecisionPoint& p, int passes, double tol) {
  const int offset = static_cast<int>(all.size() - as.sets.size());
  for (int pass = 0; pass < passes; ++pass) {
    for (int idx : as.polish_order) all[offset + idx].project(p);
    double worst = 0.0;
    for (int idx : as.polish_order)
      worst = std::max(worst, all[offset + idx].distance(p));
    if (worst <= tol) break;
  }
}

// margin slack of the received QAM coordinates against the solved boxes;
// negative means violation
double qam_box_slack(const IsccProblem& pb, const Assembly& as,
                     const DecisionPoint& p, double eps_u) {
  const int n_tx = pb.cfg.n_tx, L = pb.cfg.frame_len;
  const int k_u = static_cast<int>(pb.scene.users.size());
  MatC slots = Eigen::Map<const MatC>(p.x.data(), n_tx, L);
  MatC got = as.coupling->h * slots;
  double slack = std::numeric_limits<double>::infinity();
  for (int k = 0; k < k_u; ++k)
    for (int axis = 0; axis < 2; ++axis) {
      const QamAxisProblem& pbx = (*as.axis_problems)[2 * k + axis];
      double tau = p.tau(2 * k + axis);
      for (int l = 0; l < L; ++l) {
        double tight = eps_u > 0.0 ? eps_u * slots.col(l).norm() : 0.0;
        double v = axis == 0 ? got(k, l).real() : got(k, l).imag();
        if (pbx.a_finite[l])
          slack = std::min(
              slack, v - ((pbx.s(l) - 1.0) * tau + pbx.a(l) + tight));
        if (pbx.c_finite[l])
          slack = std::min(
              slack, ((pbx.s(l) + 1.0) * tau - pbx.c(l) - tight) - v);
      }
    }
  return slack;
}

SolveOutput solve_mm(const IsccProblem& pb, const SolverOptions& opts,
                     const Mode& mode) {
  auto t0 = std::chrono::steady_clock::now();
  const SystemConfig& cfg = pb.cfg;
  const int n_tx = cfg.n_tx, L = cfg.frame_len;
  const int k_u = static_cast<int>(pb.scene.users.size());
  const int k_t = static_cast<int>(pb.scene.targets.size());
  if (k_t == 0) throw std::invalid_argument("scene needs at least one target");

  Assembly as = assemble_static(pb, mode);
  DecisionPoint p = initial_point(pb, mode, as);

  SolveOutput out;
  SolveReport& rep = out.report;

  PdaOptions popts = opts.pda;
  popts.residual_tol *= std::sqrt(std::max(1.0, cfg.power));
  double rho_carry = popts.schedule.rho_init;

  double polish_tol = 1e-10 * std::max(1.0, std::sqrt(cfg.power));
  DecisionPoint best = p;
  double best_obj = -std::numeric_limits<double>::infinity();
  double xi_prev = 0.0;
  VecC x_prev = p.x;
  long long trace_offset = 0;
  std::vector<ProjectionSet> all;
  bool stopped_on_safeguard = false;
  bool plateaued = false;

  for (int outer = 0; outer < opts.mm_max_outer; ++outer) {
    Waveform ref = Waveform::from_stacked(p.x, n_tx);
    SurrogateBatch batch = build_surrogates(pb, as, ref);

    all.clear();
    all.reserve(batch.sets.size() + as.sets.size());
    for (ProjectionSet& s : batch.sets) all.push_back(std::move(s));
    for (const ProjectionSet& s : as.sets) all.push_back(s);

    double worst_phi = std::numeric_limits<double>::infinity();
    for (const auto& d : batch.data)
      worst_phi = std::min(worst_phi, d->value_ref);
    p.xi = -worst_phi;

    PdaOptions run_opts = popts;
    // free steps while the objective still climbs; once it saturates the
    // inner solves anchor to the expansion point, so the iterate stops
    // sliding along the flat floor of equal-value solutions
    if (!plateaued) run_opts.anchor_damping = 0.0;
    if (opts.warm_rho && outer > 0)
      run_opts.schedule.rho_init = std::clamp(
          rho_carry / (popts.schedule.growth * popts.schedule.growth),
          popts.schedule.rho_init, popts.schedule.rho_max);
    PdaResult inner = pda_solve(p, all, run_opts);
    rho_carry = inner.rho_final;
    rep.inner_iters_total += inner.iters;
    for (PdaTraceRow row : inner.trace) {
      row.iter += static_cast<int>(trace_offset);
      rep.inner_trace.push_back(row);
    }
    trace_offset += inner.iters;

    p = inner.point;
    polish_feasible(as, all, p, opts.polish_passes, polish_tol);

    Waveform w = Waveform::from_stacked(p.x, n_tx);
    double obj = true_min_scnr(pb, as, w);
    double step = (p.x - x_prev).norm();
    x_prev = p.x;

    if (obj < best_obj * (1.0 - 1e-9) - 1e-15) {
      stopped_on_safeguard = true;
      p = best;
      break;
    }
    best = p;
    best_obj = obj;
    rep.objective_trace.push_back(obj);
    rep.step_trace.push_back(step);
    rep.outer_iters = outer + 1;

    // declared only once the surrogate has been refreshed a couple of times;
    // the first cold surrogate can leave a large consensus residual on its own
    if (outer >= 2 && !inner.converged &&
        inner.rho_final >= popts.schedule.rho_max &&
        inner.max_residual > 100.0 * run_opts.residual_tol) {
      rep.infeasible = true;
      break;
    }
    if (outer > 0 &&
        std::abs(p.xi - xi_prev) <= opts.mm_rel_tol * std::max(1.0, std::abs(p.xi)) &&
        step <= opts.mm_step_tol * std::sqrt(pb.cfg.power)) {
      rep.converged = true;
      xi_prev = p.xi;
      break;
    }
    if (outer > 0 && std::abs(p.xi - xi_prev) <=
                         10.0 * opts.mm_rel_tol * std::max(1.0, std::abs(p.xi)))
      plateaued = true;
    xi_prev = p.xi;
  }
  if (stopped_on_safeguard) rep.converged = true;

  out.waveform = Waveform::from_stacked(p.x, n_tx);
  out.d = p.d;
  out.tau = p.tau;
  out.r = p.r;

  rep.min_scnr = best_obj;
  rep.grid_min_scnr = best_obj;
  rep.fine_grid_min_scnr =
      mode.robust ? fine_grid_min_scnr(pb, opts, out.waveform) : best_obj;

  for (const ProjectionSet& s : all) {
    std::string family = s.label.substr(0, s.label.find('['));
    double res = s.distance(p);
    auto it = rep.residuals.find(family);
    if (it == rep.residuals.end() || it->second < res)
      rep.residuals[family] = res;
  }

  // feasibility verdict against the published tolerances
  bool ok = out.waveform.total_power() <= cfg.power * (1.0 + 1e-6);
  if (mode.covert) {
    NoiseShapingAux aux = pb.aux;
    aux.scale = p.d;
    for (int k = 0; k < k_t && ok; ++k) {
      double res = noise_shaping_residual(out.waveform, pb.scene.targets[k],
                                          aux, k, cfg);
      ok = res <= pb.aux.tolerance(k) * (1.0 + 1e-4);
    }
  }
  if (!mode.qam) {
    double eps_u = mode.robust ? pb.uncertainty.eps_user : 0.0;
    for (int k = 0; k < k_u && ok; ++k)
      for (int l = 0; l < L && ok; ++l)
        for (int side = 0; side < 2; ++side) {
          const VecC& g = *as.margin_dirs[2 * (k * L + l) + side];
          VecC xs = p.x.segment(l * n_tx, n_tx);
          double margin = std::real(g.dot(xs)) - eps_u * xs.norm();
          ok = ok && margin >= as.mu(k) * (1.0 - 1e-4) - 1e-12;
        }
  } else {
    double eps_u = mode.robust ? pb.uncertainty.eps_user : 0.0;
    ok = ok && qam_box_slack(pb, as, p, eps_u) >= -1e-4;
  }
  rep.feasible = ok && !rep.infeasible;

  rep.wall_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - t0)
                    .count();
  return out;
}

}  // namespace

SolveOutput solve_iscc_psk(const IsccProblem& pb, const SolverOptions& opts) {
  if (pb.constellation.kind != ConstellationKind::Psk)
    throw std::invalid_argument("PSK solver needs a PSK constellation");
  return solve_mm(pb, opts, {false, false, true});
}

SolveOutput solve_iscc_qam(const IsccProblem& pb, const SolverOptions& opts) {
  if (pb.constellation.kind != ConstellationKind::Qam)
    throw std::invalid_argument("QAM solver needs a QAM constellation");
  return solve_mm(pb, opts, {true, false, true});
}

SolveOutput solve_robust_psk(const IsccProblem& pb, const SolverOptions& opts) {
  if (pb.constellation.kind != ConstellationKind::Psk)
    throw std::invalid_argument("PSK solver needs a PSK constellation");
  return solve_mm(pb, opts, {false, true, true});
}

SolveOutput solve_robust_qam(const IsccProblem& pb, const SolverOptions& opts) {
  if (pb.constellation.kind != ConstellationKind::Qam)
    throw std::invalid_argument("QAM solver needs a QAM constellation");
  return solve_mm(pb, opts, {true, true, true});
}

SolveOutput slp_baseline(const IsccProblem& pb, const SolverOptions& opts) {
  Mode mode;
  mode.qam = pb.constellation.kind == ConstellationKind::Qam;
  mode.robust = false;
  mode.covert = false;
  SolveOutput out = solve_mm(pb, opts, mode);
  out.report.notes = "plain precoder, no shaping constraints";
  return out;
}

}  // namespace iscc
