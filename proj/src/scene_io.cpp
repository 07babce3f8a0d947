#include "iscc/scene_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <stdexcept>

namespace iscc {

namespace {

using nlohmann::json;

TargetSpec parse_target(const json& j) {
  TargetSpec t;
  t.angle = deg2rad(j.at("angle_deg").get<double>());
  t.rcs = j.value("rcs", 1.0);
  if (j.contains("clutter"))
    for (const json& c : j.at("clutter"))
      t.clutter.push_back({deg2rad(c.at("angle_deg").get<double>()),
                           c.value("power", 1.0)});
  return t;
}

UserSpec parse_user(const json& j) {
  UserSpec u;
  u.angle = deg2rad(j.at("angle_deg").get<double>());
  u.rician_factor = j.value("rician_factor", 3.0);
  u.n_paths = j.value("n_paths", 8);
  u.noise_power = j.value("noise_power", 1.0);
  return u;
}

json target_to_json(const TargetSpec& t) {
  json j;
  j["angle_deg"] = rad2deg(t.angle);
  j["rcs"] = t.rcs;
  json cl = json::array();
  for (const ClutterPatch& c : t.clutter)
    cl.push_back({{"angle_deg", rad2deg(c.angle)}, {"power", c.power}});
  j["clutter"] = cl;
  return j;
}

json user_to_json(const UserSpec& u) {
  return {{"angle_deg", rad2deg(u.angle)},
          {"rician_factor", u.rician_factor},
          {"n_paths", u.n_paths},
          {"noise_power", u.noise_power}};
}

GridKind parse_grid_kind(const std::string& s) {
  if (s == "uniform") return GridKind::Uniform;
  if (s == "chebyshev") return GridKind::Chebyshev;
  throw std::invalid_argument("unknown grid kind: " + s);
}

}  // namespace

ExperimentPlan default_plan(bool paper_scale) {
  ExperimentPlan plan;
  plan.cfg.n_tx = paper_scale ? 15 : 8;
  plan.cfg.n_rx = plan.cfg.n_tx;
  plan.cfg.frame_len = 16;
  plan.cfg.power = paper_scale ? 30.0 : 160.0;
  plan.cfg.spacing_ratio = 0.5;
  plan.cfg.rx_noise_power = 1.0;

  // targets near broadside with flanking clutter, users well outside the
  // sensed sector; at n = 8 this keeps the comm beams resolvable from the
  // covertly shaped target responses
  TargetSpec t1;
  t1.angle = deg2rad(-20.0);
  t1.clutter = {{deg2rad(-35.0), 1.0}, {deg2rad(-5.0), 1.0}};
  TargetSpec t2;
  t2.angle = deg2rad(20.0);
  t2.clutter = {{deg2rad(5.0), 1.0}, {deg2rad(35.0), 1.0}};
  plan.scene.targets = {t1, t2};

  UserSpec u1;
  u1.angle = deg2rad(-50.0);
  UserSpec u2;
  u2.angle = deg2rad(50.0);
  plan.scene.users = {u1, u2};

  plan.qos.gamma = std::pow(10.0, 10.0 / 10.0);
  plan.sweep_variable = "gamma_db";
  plan.sweep_values = {5.0, 10.0, 15.0};
  return plan;
}

ExperimentPlan ExperimentPlan::at_point(std::size_t index) const {
  ExperimentPlan p = *this;
  p.sweep_variable.clear();
  p.sweep_values.clear();
  if (sweep_values.empty()) return p;
  double v = sweep_values.at(index);
  if (sweep_variable == "gamma_db") {
    p.qos.gamma = std::pow(10.0, v / 10.0);
    p.qos.epsilon.reset();
  } else if (sweep_variable == "epsilon") {
    p.qos.epsilon = v;
    p.qos.gamma.reset();
  } else if (sweep_variable == "delta") {
    p.delta = v;
  } else if (sweep_variable == "n_tx") {
    p.cfg.n_tx = static_cast<int>(v);
    p.cfg.n_rx = static_cast<int>(v);
  } else if (sweep_variable == "eps_user") {
    p.uncertainty.eps_user = v;
    p.robust = true;
  } else if (sweep_variable == "eps_target") {
    p.uncertainty.eps_target = deg2rad(v);
    p.robust = true;
  } else {
    throw std::invalid_argument("unknown sweep variable: " + sweep_variable);
  }
  return p;
}

double ExperimentPlan::point_value(std::size_t index) const {
  return sweep_values.empty() ? 0.0 : sweep_values.at(index);
}

ExperimentPlan plan_from_json(const json& j) {
  ExperimentPlan plan = default_plan(j.value("paper_scale", false));
  if (j.contains("scene")) {
    const json& s = j.at("scene");
    plan.cfg.n_tx = s.value("n_tx", plan.cfg.n_tx);
    plan.cfg.n_rx = s.value("n_rx", plan.cfg.n_tx);
    plan.cfg.frame_len = s.value("frame_len", plan.cfg.frame_len);
    plan.cfg.power = s.value("power", plan.cfg.power);
    plan.cfg.spacing_ratio = s.value("spacing_ratio", plan.cfg.spacing_ratio);
    plan.cfg.rx_noise_power = s.value("rx_noise_power", plan.cfg.rx_noise_power);
    if (s.contains("targets")) {
      plan.scene.targets.clear();
      for (const json& t : s.at("targets"))
        plan.scene.targets.push_back(parse_target(t));
    }
    if (s.contains("users")) {
      plan.scene.users.clear();
      for (const json& u : s.at("users")) plan.scene.users.push_back(parse_user(u));
    }
  }
  if (j.contains("constellation")) {
    const json& c = j.at("constellation");
    std::string kind = c.value("kind", "psk");
    int order = c.value("order", 4);
    if (kind == "psk")
      plan.constellation = Constellation::psk(order);
    else if (kind == "qam")
      plan.constellation = Constellation::qam(order);
    else
      throw std::invalid_argument("unknown constellation kind: " + kind);
  }
  if (j.contains("qos")) {
    const json& q = j.at("qos");
    plan.qos = {};
    if (q.contains("epsilon")) plan.qos.epsilon = q.at("epsilon").get<double>();
    if (q.contains("gamma_db"))
      plan.qos.gamma = std::pow(10.0, q.at("gamma_db").get<double>() / 10.0);
    if (q.contains("gamma")) plan.qos.gamma = q.at("gamma").get<double>();
  }
  plan.delta = j.value("delta", plan.delta);
  if (j.contains("uncertainty")) {
    const json& u = j.at("uncertainty");
    plan.uncertainty.eps_user = u.value("eps_user", 0.0);
    plan.uncertainty.eps_target = deg2rad(u.value("eps_target_deg", 0.0));
    plan.uncertainty.grid_size = u.value("grid_size", 5);
    plan.uncertainty.grid_kind =
        parse_grid_kind(u.value("grid_kind", std::string("uniform")));
    plan.robust = j.value("robust", plan.uncertainty.eps_user > 0.0 ||
                                        plan.uncertainty.eps_target > 0.0);
  } else {
    plan.robust = j.value("robust", false);
  }
  if (j.contains("sweep")) {
    const json& s = j.at("sweep");
    plan.sweep_variable = s.at("variable").get<std::string>();
    plan.sweep_values = s.at("values").get<std::vector<double>>();
  } else if (j.contains("sweep_variable")) {
    plan.sweep_variable = j.at("sweep_variable").get<std::string>();
    plan.sweep_values = j.value("sweep_values", std::vector<double>{});
  }
  if (j.contains("methods"))
    plan.methods = j.at("methods").get<std::vector<std::string>>();
  plan.trials = j.value("trials", plan.trials);
  plan.seed = j.value("seed", plan.seed);
  plan.constellation_frames =
      j.value("constellation_frames", plan.constellation_frames);
  plan.solve_per_frame = j.value("solve_per_frame", plan.solve_per_frame);
  plan.eve_noise_power = j.value("eve_noise_power", plan.eve_noise_power);
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    plan.solver.mm_max_outer = s.value("max_outer", plan.solver.mm_max_outer);
    plan.solver.mm_rel_tol = s.value("rel_tol", plan.solver.mm_rel_tol);
    plan.solver.pda.max_iters = s.value("max_inner", plan.solver.pda.max_iters);
    plan.solver.pda.accelerate =
        s.value("accelerate", plan.solver.pda.accelerate);
  }
  return plan;
}

ExperimentPlan load_plan(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open plan file: " + path);
  json j = json::parse(in);
  return plan_from_json(j);
}

json plan_to_json(const ExperimentPlan& plan) {
  json scene;
  scene["n_tx"] = plan.cfg.n_tx;
  scene["n_rx"] = plan.cfg.n_rx;
  scene["frame_len"] = plan.cfg.frame_len;
  scene["power"] = plan.cfg.power;
  scene["spacing_ratio"] = plan.cfg.spacing_ratio;
  scene["rx_noise_power"] = plan.cfg.rx_noise_power;
  scene["targets"] = json::array();
  for (const TargetSpec& t : plan.scene.targets)
    scene["targets"].push_back(target_to_json(t));
  scene["users"] = json::array();
  for (const UserSpec& u : plan.scene.users)
    scene["users"].push_back(user_to_json(u));

  json j;
  j["scene"] = std::move(scene);
  j["constellation"] = {
      {"kind",
       plan.constellation.kind == ConstellationKind::Psk ? "psk" : "qam"},
      {"order", plan.constellation.order}};
  json qos;
  if (plan.qos.epsilon) qos["epsilon"] = *plan.qos.epsilon;
  if (plan.qos.gamma) qos["gamma"] = *plan.qos.gamma;
  j["qos"] = std::move(qos);
  j["delta"] = plan.delta;
  j["uncertainty"] = {
      {"eps_user", plan.uncertainty.eps_user},
      {"eps_target_deg", rad2deg(plan.uncertainty.eps_target)},
      {"grid_size", plan.uncertainty.grid_size},
      {"grid_kind",
       plan.uncertainty.grid_kind == GridKind::Uniform ? "uniform"
                                                       : "chebyshev"}};
  j["robust"] = plan.robust;
  if (!plan.sweep_variable.empty())
    j["sweep"] = {{"variable", plan.sweep_variable},
                  {"values", plan.sweep_values}};
  j["methods"] = plan.methods;
  j["trials"] = plan.trials;
  j["seed"] = plan.seed;
  j["constellation_frames"] = plan.constellation_frames;
  j["solve_per_frame"] = plan.solve_per_frame;
  j["eve_noise_power"] = plan.eve_noise_power;
  return j;
}

json report_to_json(const SolveReport& report, const VecR* tau) {
  json j;
  j["converged"] = report.converged;
  j["feasible"] = report.feasible;
  j["infeasible"] = report.infeasible;
  j["outer_iters"] = report.outer_iters;
  j["inner_iters_total"] = report.inner_iters_total;
  j["objective_trace"] = report.objective_trace;
  json res;
  for (const auto& [family, value] : report.residuals) res[family] = value;
  j["residuals"] = std::move(res);
  j["wall_ms"] = report.wall_ms;
  j["min_scnr"] = report.min_scnr;
  if (report.grid_min_scnr != report.fine_grid_min_scnr) {
    j["grid_min_scnr"] = report.grid_min_scnr;
    j["fine_grid_min_scnr"] = report.fine_grid_min_scnr;
  }
  if (!report.notes.empty()) j["notes"] = report.notes;
  if (tau && tau->size() > 0) {
    json t = json::array();
    for (Eigen::Index k = 0; 2 * k + 1 < tau->size(); ++k)
      t.push_back({(*tau)(2 * k), (*tau)(2 * k + 1)});
    j["tau"] = std::move(t);
  }
  return j;
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, ptr);
}

void write_trace_csv(std::ostream& os, const std::vector<PdaTraceRow>& trace) {
  os << "iter,xi,rho,max_residual,step_norm\n";
  for (const PdaTraceRow& row : trace)
    os << row.iter << ',' << format_double(row.xi) << ','
       << format_double(row.rho) << ',' << format_double(row.max_residual)
       << ',' << format_double(row.step_norm) << '\n';
}

}  // namespace iscc
