// End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
// the process exits nonzero if any of them fail. Tolerances are pinned here
// on purpose: loosening them is a behavior change, not a test fix.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "iscc/harness.hpp"
#include "iscc/metrics.hpp"
#include "iscc/qam.hpp"
#include "iscc/robust.hpp"
#include "iscc/scene_io.hpp"
#include "iscc/solver.hpp"
#include "iscc/surrogate.hpp"
#include "support/oracle_suite.hpp"
#include "support/oracles.hpp"

using namespace iscc;
namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int id, const std::string& label, bool pass,
            const std::string& detail) {
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << id << ": "
            << label;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
  if (!pass) ++g_failures;
}

double seconds_since(clock_type::time_point t0) {
  return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

double psk_mu(const IsccProblem& pb, int user) {
  int m = pb.constellation.order;
  if (pb.qos.epsilon)
    return qos_threshold_psk(*pb.qos.epsilon, pb.user_noise(user), m);
  return qos_threshold_psk_snr(*pb.qos.gamma, pb.user_noise(user), m);
}

// smallest margin over users, slots, and both rotations, normalized by mu
double psk_worst_margin_ratio(const SolveOutput& out, const IsccProblem& pb) {
  int m = pb.constellation.order;
  double worst = 1e300;
  for (int k = 0; k < pb.channels.n_users(); ++k) {
    double mu = psk_mu(pb, k);
    VecC h = pb.channels.columns.col(k);
    for (int l = 0; l < pb.cfg.frame_len; ++l) {
      RotatedPair rot = psk_rotated_pair(pb.frame.symbols(k, l), m);
      for (cxd rs : {rot.tilt, rot.bar}) {
        double margin = std::real(
            ((h.array() * std::conj(rs)).matrix()).dot(out.waveform.slots.col(l)));
        worst = std::min(worst, margin / mu);
      }
    }
  }
  return worst;
}

double shaping_worst_ratio(const SolveOutput& out, const IsccProblem& pb) {
  double worst = 0.0;
  NoiseShapingAux aux = pb.aux;
  aux.scale = out.d;
  for (int k = 0; k < int(pb.scene.targets.size()); ++k) {
    double res =
        noise_shaping_residual(out.waveform, pb.scene.targets[k], aux, k, pb.cfg);
    worst = std::max(worst, res / pb.aux.tolerance(k));
  }
  return worst;
}

double qam_worst_slack(const SolveOutput& out, const IsccProblem& pb) {
  int k_u = pb.channels.n_users();
  VecR alpha(k_u), beta(k_u);
  for (int k = 0; k < k_u; ++k) {
    QamCellBounds b = qam_bounds(*pb.qos.epsilon, pb.user_noise(k));
    alpha(k) = b.alpha;
    beta(k) = b.beta;
  }
  auto probs =
      qam_axis_problems(pb.frame.symbols, pb.constellation.order, alpha, beta);
  double worst = 1e300;
  for (int k = 0; k < k_u; ++k) {
    VecC h = pb.channels.columns.col(k);
    for (int axis = 0; axis < 2; ++axis) {
      const QamAxisProblem& ap = probs[2 * k + axis];
      double tau = out.tau(2 * k + axis);
      for (int l = 0; l < pb.cfg.frame_len; ++l) {
        cxd z = h.dot(out.waveform.slots.col(l));
        double v = axis == 0 ? z.real() : z.imag();
        if (ap.a_finite[l])
          worst = std::min(worst, v - ((ap.s(l) - 1.0) * tau + ap.a(l)));
        if (ap.c_finite[l])
          worst = std::min(worst, ((ap.s(l) + 1.0) * tau - ap.c(l)) - v);
      }
    }
  }
  return worst;
}

}  // namespace

int main() {
  std::cout << "acceptance suite" << std::endl;

  // ---- 1: projection oracles ----------------------------------------------
  try {
    auto t0 = clock_type::now();
    oracle::SuiteResult suite = oracle::run_projection_suite(11, 100, nullptr);
    double wall = seconds_since(t0);
    bool pass = suite.pass && suite.families.size() == 7 && wall < 120.0;
    double worst = 0.0;
    for (const auto& f : suite.families)
      worst = std::max(worst, f.max_error / f.tolerance);
    report(1, "closed-form projections match independent oracles", pass,
           "worst error at " + fmt(worst) + "x tolerance, " + fmt(wall) + " s");
  } catch (const std::exception& e) {
    report(1, "closed-form projections match independent oracles", false,
           e.what());
  }

  // ---- 2: surrogate tangency and global minorization ----------------------
  try {
    ExperimentPlan plan = default_plan();
    IsccProblem pb = make_problem(plan, 2, 1);
    RngStream rng(2, "acc-surrogate");
    Waveform ref;
    ref.slots.resize(pb.cfg.n_tx, pb.cfg.frame_len);
    bool pass = true;
    double worst_gap = 0.0, worst_tangent = 0.0;
    for (int rep = 0; rep < 4 && pass; ++rep) {
      for (int i = 0; i < pb.cfg.n_tx; ++i)
        for (int l = 0; l < pb.cfg.frame_len; ++l) ref.slots(i, l) = rng.cnormal();
      ref.slots *= std::sqrt(pb.cfg.power) / ref.slots.norm();
      for (const TargetSpec& tgt : pb.scene.targets) {
        SurrogateData s = build_surrogate(ref, tgt, pb.cfg);
        double phi0 = scnr(ref, tgt, pb.cfg);
        double tangent = std::abs(surrogate_value(s, ref.stacked()) - phi0);
        worst_tangent = std::max(worst_tangent, tangent / std::abs(phi0));
        if (tangent > 1e-8 * std::abs(phi0)) pass = false;
        for (int trial = 0; trial < 250; ++trial) {
          Waveform x = ref;
          double scale = (trial % 2 == 0) ? 1.0 : 0.1;
          for (int i = 0; i < pb.cfg.n_tx; ++i)
            for (int l = 0; l < pb.cfg.frame_len; ++l)
              x.slots(i, l) += scale * rng.cnormal();
          double phi = scnr(x, tgt, pb.cfg);
          double gap = surrogate_value(s, x.stacked()) - phi;
          worst_gap = std::max(worst_gap, gap);
          if (gap > 1e-8 * std::max(1.0, std::abs(phi))) pass = false;
        }
      }
    }
    report(2, "surrogate is tangent and minorizing", pass,
           "tangency " + fmt(worst_tangent) + " rel, worst excess " +
               fmt(worst_gap));
  } catch (const std::exception& e) {
    report(2, "surrogate is tangent and minorizing", false, e.what());
  }

  // ---- 3 and 4: desk solve convergence and feasibility --------------------
  SolveOutput desk_out;
  IsccProblem desk_pb;
  bool desk_ready = false;
  try {
    ExperimentPlan plan = default_plan();
    desk_pb = make_problem(plan, plan.seed, 1);  // 10 dB point
    desk_out = solve_iscc_psk(desk_pb, plan.solver);
    desk_ready = true;

    double step_tol = 1e-3 * std::sqrt(desk_pb.cfg.power);
    int settle = -1;
    for (std::size_t i = 0; i < desk_out.report.step_trace.size() && i < 50; ++i)
      if (desk_out.report.step_trace[i] < step_tol) {
        settle = static_cast<int>(i);
        break;
      }
    bool monotone = true;
    const auto& tr = desk_out.report.objective_trace;
    for (std::size_t i = 1; i < tr.size(); ++i)
      if (tr[i] < tr[i - 1] - 1e-6 * std::max(1.0, std::abs(tr[i - 1])))
        monotone = false;
    double wall_s = desk_out.report.wall_ms / 1000.0;
    bool pass = settle >= 0 && settle < 50 && monotone && wall_s < 60.0;
    report(3, "desk design settles monotonically within budget", pass,
           "settled at outer " + std::to_string(settle) + ", " + fmt(wall_s) +
               " s, min scnr " + fmt(desk_out.report.min_scnr));
  } catch (const std::exception& e) {
    report(3, "desk design settles monotonically within budget", false,
           e.what());
  }

  SolveOutput qam_out;
  IsccProblem qam_pb;
  bool qam_ready = false;
  double qam_wall_s = 0.0;

  // ---- 5: radar-only sanity against the matched-filter bound --------------
  try {
    ExperimentPlan plan = default_plan();
    plan.scene.users.clear();
    plan.scene.targets.resize(1);
    plan.scene.targets[0].clutter.clear();
    plan.delta = 1e9;
    plan.sweep_variable.clear();
    plan.sweep_values.clear();
    IsccProblem pb = make_problem(plan, 5, 0);
    SolveOutput out = solve_iscc_psk(pb, plan.solver);
    double bound =
        pb.cfg.power * pb.scene.targets[0].rcs / pb.cfg.rx_noise_power;
    bool pass = std::abs(out.report.min_scnr - bound) <= 0.01 * bound;
    report(5, "unconstrained design reaches the rank-one bound", pass,
           fmt(out.report.min_scnr) + " vs " + fmt(bound));
  } catch (const std::exception& e) {
    report(5, "unconstrained design reaches the rank-one bound", false,
           e.what());
  }

  // ---- 6: link-level symbol error rates meet the declared ceilings --------
  try {
    struct Point {
      ConstellationKind kind;
      double eps;
    };
    std::vector<Point> points = {{ConstellationKind::Psk, 1e-2},
                                 {ConstellationKind::Psk, 1e-3},
                                 {ConstellationKind::Qam, 5e-2}};
    bool pass = true;
    std::string detail;
    for (std::size_t i = 0; i < points.size(); ++i) {
      auto t0 = clock_type::now();
      ExperimentPlan plan = default_plan();
      plan.qos.gamma.reset();
      plan.sweep_variable = "epsilon";
      plan.sweep_values = {points[i].eps};
      if (points[i].kind == ConstellationKind::Qam)
        plan.constellation = Constellation::qam(2);
      IsccProblem pb = make_problem(plan, plan.seed, 0);
      SolveOutput out = points[i].kind == ConstellationKind::Qam
                            ? solve_iscc_qam(pb, plan.solver)
                            : solve_iscc_psk(pb, plan.solver);
      if (points[i].kind == ConstellationKind::Qam) {
        qam_out = out;
        qam_pb = pb;
        qam_ready = true;
      }
      MethodSolution sol;
      sol.method = "iscc";
      sol.waveform = out.waveform;
      sol.tau = out.tau;
      RngStream rng(plan.seed, "acc-mc[" + std::to_string(i) + "]");
      SerEstimate est = monte_carlo_ser(sol, pb, 100000, rng);
      double wall = seconds_since(t0);
      if (points[i].kind == ConstellationKind::Qam) qam_wall_s = wall;
      bool ok = out.report.feasible && est.ci.lo <= points[i].eps &&
                wall < 300.0;
      pass = pass && ok;
      if (!detail.empty()) detail += ", ";
      detail += fmt(est.mean) + "<=" + fmt(points[i].eps) + " in " +
                fmt(wall) + " s";
    }
    report(6, "measured symbol error rates respect the ceilings", pass, detail);
  } catch (const std::exception& e) {
    report(6, "measured symbol error rates respect the ceilings", false,
           e.what());
  }

  // ---- 4: feasibility of the returned designs -----------------------------
  try {
    bool pass = desk_ready && qam_ready;
    std::string detail;
    if (pass) {
      double p_ratio = desk_out.waveform.total_power() / desk_pb.cfg.power;
      double m_ratio = psk_worst_margin_ratio(desk_out, desk_pb);
      double s_ratio = shaping_worst_ratio(desk_out, desk_pb);
      double q_slack = qam_worst_slack(qam_out, qam_pb);
      double qp_ratio = qam_out.waveform.total_power() / qam_pb.cfg.power;
      double qs_ratio = shaping_worst_ratio(qam_out, qam_pb);
      pass = p_ratio <= 1.0 + 1e-6 && m_ratio >= 1.0 - 1e-4 &&
             s_ratio <= 1.0 + 1e-4 && q_slack >= -1e-4 &&
             qp_ratio <= 1.0 + 1e-6 && qs_ratio <= 1.0 + 1e-4;
      detail = "power " + fmt(p_ratio) + ", margin " + fmt(m_ratio) +
               ", shaping " + fmt(s_ratio) + ", qam slack " + fmt(q_slack);
    } else {
      detail = "prerequisite solve failed";
    }
    report(4, "returned waveforms satisfy every declared constraint", pass,
           detail);
  } catch (const std::exception& e) {
    report(4, "returned waveforms satisfy every declared constraint", false,
           e.what());
  }

  // ---- 7: covertness of the shaped designs --------------------------------
  try {
    ExperimentPlan plan = default_plan();  // gamma sweep 5/10/15 dB, delta 0.1
    bool ser_ok = true, order_ok = true;
    std::string detail;
    for (std::size_t p = 0; p < plan.n_points(); ++p) {
      IsccProblem pb = make_problem(plan, plan.seed, static_cast<int>(p));
      std::vector<std::string> methods = {"iscc", "slp", "bf"};
      std::vector<double> jsd(methods.size(), 0.0);
      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        MethodSolution sol = solve_method(methods[mi], plan, pb);
        RngStream erng(plan.seed, "acc-eve[" + std::to_string(p) + "]");
        EveEstimate eve =
            eavesdropper_eval(sol, pb, plan.eve_noise_power, 100000, erng);
        if (methods[mi] == "iscc") {
          if (std::abs(eve.min_ser - 0.75) > 0.05) ser_ok = false;
          if (!detail.empty()) detail += ", ";
          detail += "eve ser " + fmt(eve.min_ser);
        }
        RngStream urng(plan.seed, "acc-du[" + std::to_string(p) + "]");
        std::vector<cxd> us = user_samples(sol, pb, 512, urng);
        RngStream vrng(plan.seed, "acc-de[" + std::to_string(p) + "]");
        std::vector<cxd> es =
            eve_samples(sol, pb, eve.best_target, plan.eve_noise_power, 512,
                        vrng, true);
        jsd[mi] = js_divergence(us, es);
      }
      if (!(jsd[0] > jsd[1] && jsd[1] > jsd[2])) order_ok = false;
      detail += " | jsd " + fmt(jsd[0]) + ">" + fmt(jsd[1]) + ">" + fmt(jsd[2]);
    }
    report(7, "shaped waveforms blind the eavesdropper", ser_ok && order_ok,
           detail);
  } catch (const std::exception& e) {
    report(7, "shaped waveforms blind the eavesdropper", false, e.what());
  }

  // ---- 8: echoes approach their fitted gaussian as the budget tightens ----
  try {
    ExperimentPlan plan = default_plan();
    plan.sweep_variable = "delta";
    plan.sweep_values = {10.0, 1.0, 0.1};
    std::vector<double> vals;
    for (std::size_t p = 0; p < plan.n_points(); ++p) {
      IsccProblem pb = make_problem(plan, plan.seed, static_cast<int>(p));
      MethodSolution sol = solve_method("iscc", plan, pb);
      RngStream rng(plan.seed, "acc-raw[" + std::to_string(p) + "]");
      std::vector<cxd> es =
          eve_samples(sol, pb, 0, plan.eve_noise_power, 256, rng, false);
      RngStream fit(plan.seed, "acc-fit[" + std::to_string(p) + "]");
      vals.push_back(jsd_vs_fitted_gaussian(es, fit));
    }
    bool pass = vals.size() == 3 && vals[0] > vals[1] && vals[1] > vals[2];
    report(8, "echo clouds converge to gaussian as the tolerance shrinks",
           pass, fmt(vals[0]) + " > " + fmt(vals[1]) + " > " + fmt(vals[2]));
  } catch (const std::exception& e) {
    report(8, "echo clouds converge to gaussian as the tolerance shrinks",
           false, e.what());
  }

  // ---- 9: channel-ball robustness of the margins --------------------------
  try {
    ExperimentPlan plan = default_plan();
    plan.sweep_variable.clear();
    plan.sweep_values.clear();
    plan.robust = true;
    plan.uncertainty.eps_user = 0.05;
    plan.uncertainty.eps_target = 0.0;
    plan.uncertainty.grid_size = 1;
    IsccProblem pb = make_problem(plan, plan.seed, 0);
    SolveOutput rob = solve_robust_psk(pb, plan.solver);
    SolveOutput nom = solve_iscc_psk(pb, plan.solver);

    int m = pb.constellation.order;
    double eps = plan.uncertainty.eps_user;
    RngStream rng(plan.seed, "acc-ball");
    double rob_gap = 1e300;
    bool nom_violated = false;
    for (int k = 0; k < pb.channels.n_users(); ++k) {
      double mu = psk_mu(pb, k);
      VecC h = pb.channels.columns.col(k);
      for (int l = 0; l < pb.cfg.frame_len; ++l) {
        RotatedPair rot = psk_rotated_pair(pb.frame.symbols(k, l), m);
        for (cxd rs : {rot.tilt, rot.bar}) {
          VecC g = (h.array() * std::conj(rs)).matrix();
          double wc_rob = oracle::sampled_worst_margin(
              g, VecC(rob.waveform.slots.col(l)), eps, 10000, rng);
          rob_gap = std::min(rob_gap, wc_rob - mu);
          double wc_nom = oracle::sampled_worst_margin(
              g, VecC(nom.waveform.slots.col(l)), eps, 10000, rng);
          if (wc_nom < mu - 1e-9) nom_violated = true;
        }
      }
    }

    ExperimentPlan plan0 = plan;
    plan0.uncertainty.eps_user = 0.0;
    IsccProblem pb0 = make_problem(plan0, plan0.seed, 0);
    SolveOutput rob0 = solve_robust_psk(pb0, plan0.solver);
    double parity = std::abs(rob0.report.min_scnr - nom.report.min_scnr) /
                    std::max(1.0, std::abs(nom.report.min_scnr));

    bool pass = rob.report.feasible && rob_gap >= -1e-3 && nom_violated &&
                parity <= 1e-3;
    report(9, "robust margins survive the sampled channel ball", pass,
           "worst robust gap " + fmt(rob_gap) + ", nominal violated " +
               (nom_violated ? std::string("yes") : std::string("no")) +
               ", zero-radius parity " + fmt(parity));
  } catch (const std::exception& e) {
    report(9, "robust margins survive the sampled channel ball", false,
           e.what());
  }

  // ---- 10: worst-case closed forms against ball sampling ------------------
  try {
    RngStream rng(10, "acc-props");
    bool pass = true;
    double worst1 = 0.0, worst2 = 0.0;
    for (int inst = 0; inst < 100; ++inst) {
      int n = 2 + rng.uniform_int(7);
      VecC g(n), x(n);
      for (int i = 0; i < n; ++i) {
        g(i) = rng.cnormal();
        x(i) = rng.cnormal();
      }
      double eps = 0.01 + 0.3 * rng.uniform();
      double scale = eps * x.norm();

      double formula = worst_case_margin(g, x, eps);
      double sampled = oracle::sampled_worst_margin(g, x, eps, 2000, rng);
      double d1 = std::abs(sampled - formula);
      worst1 = std::max(worst1, d1 / scale);
      if (d1 > 1e-3 * scale + 1e-12) pass = false;

      oracle::AxisDeviation dev = oracle::sampled_axis_deviation(x, eps, 2000, rng);
      double d2 = std::max(
          std::max(std::abs(dev.re_hi - scale), std::abs(dev.re_lo + scale)),
          std::max(std::abs(dev.im_hi - scale), std::abs(dev.im_lo + scale)));
      worst2 = std::max(worst2, d2 / scale);
      if (d2 > 1e-3 * scale + 1e-12) pass = false;
    }
    report(10, "uncertainty propositions verified by sampling", pass,
           "margin dev " + fmt(worst1) + ", axis dev " + fmt(worst2) +
               " of tolerance 1e-3");
  } catch (const std::exception& e) {
    report(10, "uncertainty propositions verified by sampling", false,
           e.what());
  }

  // ---- 11: bitwise reproducibility of the evaluation pipeline -------------
  try {
    ExperimentPlan plan = default_plan();
    plan.cfg.n_tx = 4;
    plan.cfg.n_rx = 4;
    plan.cfg.frame_len = 4;
    plan.cfg.power = 30.0;
    plan.scene.targets.resize(1);
    plan.scene.targets[0].clutter.resize(1);
    plan.scene.users.resize(1);
    plan.sweep_values = {8.0};
    plan.trials = 2000;
    plan.constellation_frames = 4;
    plan.seed = 3;

    fs::path dir_a = fs::temp_directory_path() / "iscc_accept_a";
    fs::path dir_b = fs::temp_directory_path() / "iscc_accept_b";
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
    run_experiment(plan, dir_a.string());
    run_experiment(plan, dir_b.string());
    auto slurp = [](const fs::path& p) {
      std::ifstream in(p, std::ios::binary);
      std::ostringstream ss;
      ss << in.rdbuf();
      return ss.str();
    };
    std::string a = slurp(dir_a / "metrics.csv");
    std::string b = slurp(dir_b / "metrics.csv");
    bool pass = !a.empty() && a == b;
    report(11, "repeated runs reproduce metrics.csv byte for byte", pass,
           std::to_string(a.size()) + " bytes");
    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
  } catch (const std::exception& e) {
    report(11, "repeated runs reproduce metrics.csv byte for byte", false,
           e.what());
  }

  std::cout << (g_failures == 0 ? "all criteria passed"
                                : std::to_string(g_failures) +
                                      " criterion(s) failed")
            << std::endl;
  return g_failures == 0 ? 0 : 1;
}
