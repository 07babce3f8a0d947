#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "iscc/harness.hpp"
#include "iscc/metrics.hpp"
#include "iscc/scene_io.hpp"
#include "iscc/solver.hpp"

using namespace iscc;

namespace {

IsccProblem radar_only_problem(ConstellationKind kind) {
  IsccProblem pb;
  pb.cfg.n_tx = 6;
  pb.cfg.n_rx = 6;
  pb.cfg.frame_len = 8;
  pb.cfg.power = 40.0;
  pb.cfg.rx_noise_power = 1.0;

  TargetSpec t;
  t.angle = deg2rad(20.0);
  t.rcs = 2.0;
  pb.scene.targets = {t};

  pb.channels.columns = MatC::Zero(pb.cfg.n_tx, 0);
  pb.constellation = kind == ConstellationKind::Psk ? Constellation::psk(4)
                                                    : Constellation::qam(2);
  RngStream rng(3, "radar-only");
  pb.frame = draw_symbol_frame(pb.constellation, 0, pb.cfg.frame_len, rng);
  pb.aux.reference = draw_noise_reference(1, pb.cfg.frame_len, rng);
  pb.aux.tolerance = VecR::Constant(1, 1e9);  // shaping effectively off
  pb.aux.scale = VecC::Zero(1);
  pb.qos.epsilon = 0.05;
  return pb;
}

double worst_psk_margin_gap(const SolveOutput& out, const IsccProblem& pb) {
  int m = pb.constellation.order;
  double worst = 1e300;
  for (int k = 0; k < pb.channels.n_users(); ++k) {
    double mu = pb.qos.epsilon
                    ? qos_threshold_psk(*pb.qos.epsilon, pb.user_noise(k), m)
                    : qos_threshold_psk_snr(*pb.qos.gamma, pb.user_noise(k), m);
    VecC h = pb.channels.columns.col(k);
    for (int l = 0; l < pb.cfg.frame_len; ++l) {
      RotatedPair rot = psk_rotated_pair(pb.frame.symbols(k, l), m);
      for (cxd rs : {rot.tilt, rot.bar}) {
        VecC g = (h.array() * std::conj(rs)).matrix();
        double margin = std::real(g.dot(out.waveform.slots.col(l)));
        worst = std::min(worst, margin - mu * (1.0 - 1e-4));
      }
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("radar-only psk design reaches the matched-filter bound") {
  IsccProblem pb = radar_only_problem(ConstellationKind::Psk);
  SolveOutput out = solve_iscc_psk(pb);
  double bound = pb.cfg.power * pb.scene.targets[0].rcs / pb.cfg.rx_noise_power;
  CHECK(out.report.min_scnr == doctest::Approx(bound).epsilon(0.01));
  CHECK(out.report.feasible);
  CHECK(out.waveform.total_power() <= pb.cfg.power * (1.0 + 1e-6));
}

TEST_CASE("radar-only qam design reaches the same bound") {
  IsccProblem pb = radar_only_problem(ConstellationKind::Qam);
  SolveOutput out = solve_iscc_qam(pb);
  double bound = pb.cfg.power * pb.scene.targets[0].rcs / pb.cfg.rx_noise_power;
  CHECK(out.report.min_scnr == doctest::Approx(bound).epsilon(0.01));
}

TEST_CASE("desk psk solve is feasible with a monotone objective") {
  ExperimentPlan plan = default_plan();
  IsccProblem pb = make_problem(plan, 1, 1);  // middle sweep point
  SolveOutput out = solve_iscc_psk(pb);

  CHECK(out.report.converged);
  CHECK(out.report.feasible);
  CHECK(!out.report.infeasible);
  CHECK(out.report.min_scnr > 0.0);

  // declared feasibility backed by direct recomputation
  CHECK(out.waveform.total_power() <= pb.cfg.power * (1.0 + 1e-6));
  CHECK(worst_psk_margin_gap(out, pb) >= -1e-9);
  for (int k = 0; k < int(pb.scene.targets.size()); ++k) {
    NoiseShapingAux aux = pb.aux;
    aux.scale = out.d;
    double res = noise_shaping_residual(out.waveform, pb.scene.targets[k], aux,
                                        k, pb.cfg);
    CHECK(res <= pb.aux.tolerance(k) * (1.0 + 1e-4));
  }

  const auto& trace = out.report.objective_trace;
  REQUIRE(!trace.empty());
  for (std::size_t i = 1; i < trace.size(); ++i)
    CHECK(trace[i] >= trace[i - 1] - 1e-6 * std::max(1.0, std::abs(trace[i - 1])));

  // iterate settles within the outer budget
  bool settled = false;
  double tol = 1e-3 * std::sqrt(pb.cfg.power);
  for (std::size_t i = 0; i < out.report.step_trace.size() && i < 50; ++i)
    settled = settled || out.report.step_trace[i] < tol;
  CHECK(settled);
  CHECK(out.report.min_scnr ==
        doctest::Approx(trace.back()).epsilon(1e-9));
}

TEST_CASE("dropping the shaping constraint can only help the objective") {
  ExperimentPlan plan = default_plan();
  IsccProblem pb = make_problem(plan, 1, 1);
  SolveOutput tight = solve_iscc_psk(pb);
  SolveOutput loose = slp_baseline(pb);
  CHECK(loose.report.min_scnr >=
        tight.report.min_scnr * (1.0 - 1e-3) - 1e-6);
  CHECK(loose.report.feasible);
  // the plain precoder does not return shaping scales
  CHECK(loose.d.norm() == doctest::Approx(0.0));
}

TEST_CASE("joint rescaling of power and noise keeps the verdict") {
  ExperimentPlan plan = default_plan();
  IsccProblem pb = make_problem(plan, 1, 1);
  SolveOutput base = solve_iscc_psk(pb);

  const double c = 4.0;
  IsccProblem scaled = pb;
  scaled.cfg.power *= c;
  scaled.cfg.rx_noise_power *= c;
  for (UserSpec& u : scaled.scene.users) u.noise_power *= c;
  scaled.aux.tolerance *= c;
  SolveOutput big = solve_iscc_psk(scaled);

  CHECK(base.report.feasible == big.report.feasible);
  CHECK(big.report.min_scnr ==
        doctest::Approx(base.report.min_scnr).epsilon(0.02));
}

TEST_CASE("an over-constrained design raises the infeasibility flag") {
  ExperimentPlan plan = default_plan();
  plan.cfg.n_tx = 4;
  plan.cfg.n_rx = 4;
  plan.cfg.frame_len = 4;
  plan.cfg.power = 1e-3;
  plan.scene.targets.resize(1);
  plan.scene.users.resize(1);
  plan.qos.epsilon.reset();
  plan.qos.gamma = 1e4;
  plan.sweep_variable.clear();
  plan.sweep_values.clear();
  IsccProblem pb = make_problem(plan, 1, 0);
  SolveOutput out = solve_iscc_psk(pb);
  CHECK(!out.report.feasible);
  CHECK(out.report.infeasible);
}

TEST_CASE("desk qam solve is feasible with positive half-spacings") {
  ExperimentPlan plan = default_plan();
  plan.constellation = Constellation::qam(2);
  plan.sweep_variable = "epsilon";
  plan.sweep_values = {0.05};
  // the outer 16QAM ring needs roughly 2.5x the QPSK symbol energy at the
  // same ceiling, so the desk budget goes up with the constellation order
  plan.cfg.power = 400.0;
  IsccProblem pb = make_problem(plan, 1, 0);
  SolveOutput out = solve_iscc_qam(pb);
  CHECK(out.report.feasible);
  REQUIRE(out.tau.size() == 2 * pb.channels.n_users());
  for (int i = 0; i < out.tau.size(); ++i) CHECK(out.tau(i) > 0.0);
  CHECK(out.waveform.total_power() <= pb.cfg.power * (1.0 + 1e-6));
  CHECK(out.report.min_scnr > 0.0);
}
