#include "dfsolve/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <random>
#include <thread>

namespace dfsolve {

using nlohmann::json;

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::Ex1: return "ex1";
    case Experiment::Ex2: return "ex2";
    case Experiment::Ex3: return "ex3";
    case Experiment::Ex4: return "ex4";
    case Experiment::Custom: return "custom";
  }
  return "custom";
}

Experiment parse_experiment(const std::string& s) {
  for (Experiment e : {Experiment::Ex1, Experiment::Ex2, Experiment::Ex3, Experiment::Ex4, Experiment::Custom}) {
    if (to_string(e) == s) return e;
  }
  throw std::invalid_argument("unknown experiment '" + s + "'");
}

ExperimentConfig default_config(Experiment e) {
  ExperimentConfig c;
  c.experiment = e;
  switch (e) {
    case Experiment::Ex1:
    case Experiment::Custom:
      c.levels = 7;
      break;
    case Experiment::Ex2:
      c.levels = 5;
      c.kappa = {"heterogeneous-ex2", 1e-8};
      c.forchheimer = 1e4;
      // kappa^{-1} = 1e8 puts the round-off floor of the residual near 1.5e-8.
      c.solver.tol_abs = 1e-7;
      break;
    case Experiment::Ex3:
      c.degree = 1;
      c.levels = 1;
      c.kappa = {"tensor-ex3", 0.0};
      c.forchheimer = 1e3;
      c.r = 3.0;
      c.solver.line_search = true;
      c.formats = {"csv", "vtk"};
      break;
    case Experiment::Ex4:
      c.levels = 1;
      c.formats = {"csv"};
      break;
  }
  return c;
}

// ---------------------------------------------------------------- config io

json to_json(const ExperimentConfig& c) {
  return json{
      {"experiment", to_string(c.experiment)},
      {"degree", c.degree},
      {"levels", c.levels},
      {"params", {{"kappa", {{"type", c.kappa.type}, {"value", c.kappa.value}}}, {"F", c.forchheimer}, {"r", c.r}}},
      {"solver",
       {{"tol_abs", c.solver.tol_abs},
        {"tol_rel", c.solver.tol_rel},
        {"max_iters", c.solver.max_iters},
        {"damping", c.solver.damping},
        {"line_search", c.solver.line_search}}},
      {"precond", {{"variant", to_string(c.precond.variant)}, {"pressure_mode", to_string(c.precond.pressure_mode)}}},
      {"output", {{"dir", c.output_dir.string()}, {"formats", c.formats}}},
      {"reference_levels", c.reference_levels},
      {"mesh_file", c.mesh_file.string()},
      {"ex3", {{"inlet_radius", c.ex3.inlet_radius}, {"inlet_speed", c.ex3.inlet_speed}, {"force", c.ex3.force}}},
      {"ex4",
       {{"r", c.ex4.r_values},
        {"kappa", c.ex4.kappa_values},
        {"F", c.ex4.f_values},
        {"n", c.ex4.n_values},
        {"domain", c.ex4.domain},
        {"state", c.ex4.state},
        {"threads", c.ex4.threads}}},
  };
}

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw std::invalid_argument(where + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw std::invalid_argument("unknown config key '" + where + key + "'");
  }
}

template <class T>
void read(const json& j, const char* key, const std::string& where, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw std::invalid_argument("bad value for '" + where + key + "': " + e.what());
  }
}

void validate(const ExperimentConfig& c) {
  if (c.degree != 0 && c.degree != 1) throw std::invalid_argument("degree must be 0 or 1");
  if (c.levels < 1) throw std::invalid_argument("levels must be >= 1");
  if (c.r < 2.0) throw std::invalid_argument("params.r must be >= 2");
  if (c.forchheimer < 0.0) throw std::invalid_argument("params.F must be >= 0");
  if (c.reference_levels < 1) throw std::invalid_argument("reference_levels must be >= 1");
  if (!(c.solver.damping > 0.0 && c.solver.damping <= 1.0)) {
    throw std::invalid_argument("solver.damping must lie in (0, 1]");
  }
  for (const auto& f : c.formats) {
    if (f != "csv" && f != "json" && f != "vtk") throw std::invalid_argument("unknown output format '" + f + "'");
  }
  const auto& d = c.ex4.domain;
  if (d != "unit_square" && d != "channel") throw std::invalid_argument("unknown ex4.domain '" + d + "'");
  const auto& s = c.ex4.state;
  if (s != "rest" && s != "darcy" && s != "newton") throw std::invalid_argument("unknown ex4.state '" + s + "'");
  make_permeability(c.kappa);
}

}  // namespace

ExperimentConfig config_from_json(const json& j, const ExperimentConfig& base) {
  check_keys(j, "", {"experiment", "degree", "levels", "params", "solver", "precond", "output",
                     "reference_levels", "mesh_file", "ex3", "ex4"});
  ExperimentConfig c = base;
  if (j.contains("experiment")) {
    std::string e;
    read(j, "experiment", "", e);
    c.experiment = parse_experiment(e);
  }
  read(j, "degree", "", c.degree);
  read(j, "levels", "", c.levels);
  read(j, "reference_levels", "", c.reference_levels);
  if (j.contains("mesh_file")) {
    std::string m;
    read(j, "mesh_file", "", m);
    c.mesh_file = m;
  }
  if (j.contains("params")) {
    const json& p = j.at("params");
    check_keys(p, "params.", {"kappa", "F", "r"});
    if (p.contains("kappa")) {
      const json& k = p.at("kappa");
      if (k.is_number()) {
        c.kappa = {"constant", k.get<double>()};
      } else {
        check_keys(k, "params.kappa.", {"type", "value"});
        read(k, "type", "params.kappa.", c.kappa.type);
        read(k, "value", "params.kappa.", c.kappa.value);
      }
    }
    read(p, "F", "params.", c.forchheimer);
    read(p, "r", "params.", c.r);
  }
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    check_keys(s, "solver.", {"tol_abs", "tol_rel", "max_iters", "damping", "line_search"});
    read(s, "tol_abs", "solver.", c.solver.tol_abs);
    read(s, "tol_rel", "solver.", c.solver.tol_rel);
    read(s, "max_iters", "solver.", c.solver.max_iters);
    read(s, "damping", "solver.", c.solver.damping);
    read(s, "line_search", "solver.", c.solver.line_search);
  }
  if (j.contains("precond")) {
    const json& p = j.at("precond");
    check_keys(p, "precond.", {"variant", "pressure_mode"});
    std::string v;
    if (p.contains("variant")) {
      read(p, "variant", "precond.", v);
      c.precond.variant = parse_precond_variant(v);
    }
    if (p.contains("pressure_mode")) {
      read(p, "pressure_mode", "precond.", v);
      c.precond.pressure_mode = parse_pressure_mode(v);
    }
  }
  if (j.contains("output")) {
    const json& o = j.at("output");
    check_keys(o, "output.", {"dir", "formats"});
    if (o.contains("dir")) {
      std::string d;
      read(o, "dir", "output.", d);
      c.output_dir = d;
    }
    read(o, "formats", "output.", c.formats);
  }
  if (j.contains("ex3")) {
    const json& e = j.at("ex3");
    check_keys(e, "ex3.", {"inlet_radius", "inlet_speed", "force"});
    read(e, "inlet_radius", "ex3.", c.ex3.inlet_radius);
    read(e, "inlet_speed", "ex3.", c.ex3.inlet_speed);
    read(e, "force", "ex3.", c.ex3.force);
  }
  if (j.contains("ex4")) {
    const json& e = j.at("ex4");
    check_keys(e, "ex4.", {"r", "kappa", "F", "n", "domain", "state", "threads"});
    read(e, "r", "ex4.", c.ex4.r_values);
    read(e, "kappa", "ex4.", c.ex4.kappa_values);
    read(e, "F", "ex4.", c.ex4.f_values);
    read(e, "n", "ex4.", c.ex4.n_values);
    read(e, "domain", "ex4.", c.ex4.domain);
    read(e, "state", "ex4.", c.ex4.state);
    read(e, "threads", "ex4.", c.ex4.threads);
  }
  validate(c);
  return c;
}

ExperimentConfig config_from_json(const json& j) {
  Experiment e = Experiment::Ex1;
  if (j.is_object() && j.contains("experiment") && j.at("experiment").is_string()) {
    e = parse_experiment(j.at("experiment").get<std::string>());
  }
  return config_from_json(j, default_config(e));
}

// ---------------------------------------------------------------- data

Permeability make_permeability(const KappaSpec& k) {
  if (k.type == "constant") {
    if (!(k.value > 0.0)) throw std::invalid_argument("params.kappa must be positive");
    return Permeability::scalar(k.value);
  }
  if (k.type == "heterogeneous-ex2") {
    if (!(k.value > 0.0)) throw std::invalid_argument("params.kappa.value must be positive");
    const double k0 = k.value;
    return Permeability::isotropic([k0](const Vec2& x) {
      const double s = 10.0 * x.y() - 5.0 - std::sin(10.0 * x.x());
      return k0 * (1.0 + std::exp(-0.5 * s * s));
    });
  }
  if (k.type == "tensor-ex3") {
    // Principal values over the kinematic viscosity, rotated by 0.082 rad.
    const double nu = 1e-6, theta = 0.082;
    Mat2 k0 = Mat2::Zero();
    k0(0, 0) = 5e-10 / nu;
    k0(1, 1) = 1e-10 / nu;
    Mat2 rot;
    rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return Permeability::uniform_tensor(rot * k0 * rot.transpose());
  }
  throw std::invalid_argument("unknown params.kappa.type '" + k.type + "'");
}

ModelParams make_params(const ExperimentConfig& c) {
  ModelParams p;
  p.kappa = make_permeability(c.kappa);
  p.forchheimer = c.forchheimer;
  p.r = c.r;
  return p;
}

ProblemData ManufacturedSolution::data() const {
  ProblemData d;
  d.f = f;
  d.g = g;
  d.flux_bc = u;
  d.pressure_bc = p;
  return d;
}

namespace {

// Sixth-order central difference of a scalar function along direction e.
template <class Fn>
double central_difference(const Fn& fn, const Vec2& x, const Vec2& e) {
  const double h = 1e-2;
  static const double c[3] = {45.0, -9.0, 1.0};
  double s = 0.0;
  for (int i = 1; i <= 3; ++i) s += c[i - 1] * (fn(Vec2(x + i * h * e)) - fn(Vec2(x - i * h * e)));
  return s / (60.0 * h);
}

}  // namespace

double ManufacturedSolution::self_check(const ModelParams& params, int samples) const {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> unif(0.05, 0.95);
  const Vec2 ex(1, 0), ey(0, 1);
  double worst = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Vec2 x(unif(rng), unif(rng));
    const Vec2 grad(central_difference(p, x, ex), central_difference(p, x, ey));
    const double div = central_difference([this](const Vec2& y) { return u(y).x(); }, x, ex) +
                       central_difference([this](const Vec2& y) { return u(y).y(); }, x, ey);
    const Vec2 ux = u(x);
    const Vec2 lhs = params.kappa(x).llt().solve(ux) +
                     params.forchheimer * std::pow(ux.norm(), params.r - 2.0) * ux + grad;
    worst = std::max({worst, (f(x) - lhs).lpNorm<Eigen::Infinity>(), std::abs(g(x) - div)});
  }
  return worst;
}

ManufacturedSolution smooth_solution(const ModelParams& params) {
  const double pi = M_PI;
  ManufacturedSolution m;
  m.u = [pi](const Vec2& x) {
    return Vec2(std::cos(pi * x.x()) * std::sin(pi * x.y()), -std::sin(pi * x.x()) * std::cos(pi * x.y()));
  };
  m.p = [pi](const Vec2& x) { return std::sin(pi * x.x()) * std::cos(pi * x.y()); };
  m.div_u = [](const Vec2&) { return 0.0; };
  m.grad_p = [pi](const Vec2& x) {
    return Vec2(pi * std::cos(pi * x.x()) * std::cos(pi * x.y()), -pi * std::sin(pi * x.x()) * std::sin(pi * x.y()));
  };
  const auto u = m.u;
  const auto gp = m.grad_p;
  m.f = [u, gp, params](const Vec2& x) {
    const Vec2 ux = u(x);
    return Vec2(params.kappa(x).llt().solve(ux) +
                params.forchheimer * std::pow(ux.norm(), params.r - 2.0) * ux + gp(x));
  };
  m.g = [](const Vec2&) { return 0.0; };
  m.note = "p = sin(pi x) cos(pi y); u = (cos(pi x) sin(pi y), -sin(pi x) cos(pi y)); "
           "f = kappa^{-1} u + F |u|^{r-2} u + grad p; g = div u = 0";
  return m;
}

// ---------------------------------------------------------------- runs

namespace {

bool wants(const ExperimentConfig& c, const char* format) {
  return std::find(c.formats.begin(), c.formats.end(), format) != c.formats.end();
}

std::vector<double> column(const ErrorReport& r, double LevelErrors::*field) {
  std::vector<double> out;
  for (const auto& l : r.levels) out.push_back(l.*field);
  return out;
}

std::vector<double> column(const ErrorReport& r, std::optional<double> LevelErrors::*field) {
  std::vector<double> out;
  for (const auto& l : r.levels) out.push_back((l.*field).value_or(0.0));
  return out;
}

void fill_rates(ConvergenceResult& res, bool weighted) {
  const auto h = column(res.report, &LevelErrors::h);
  res.rate_u = convergence_rates(h, column(res.report, &LevelErrors::err_u_h3div));
  res.rate_p = convergence_rates(h, column(res.report, &LevelErrors::err_p_l2));
  if (weighted) {
    res.rate_u_weighted = convergence_rates(h, column(res.report, &LevelErrors::err_u_V));
    res.rate_p_weighted = convergence_rates(h, column(res.report, &LevelErrors::err_p_Qhat));
  }
}

std::runtime_error level_error(int level, const std::exception& e) {
  return std::runtime_error("level " + std::to_string(level) + ": " + e.what());
}

SideTags channel_tags() {
  SideTags t;
  t.top = BoundaryTag::GammaU;
  return t;
}

double inflow_profile(const Vec2& x) { return 2.5 * x.y() * (1.0 - x.y()); }

ProblemData channel_data() {
  ProblemData d;
  // Left edge only: the profile vanishes on top and bottom anyway, and the
  // right edge carries the pressure condition.
  d.flux_bc = [](const Vec2& x) { return Vec2(x.x() < 1e-12 ? inflow_profile(x) : 0.0, 0.0); };
  return d;
}

}  // namespace

ConvergenceResult run_ex1(const ExperimentConfig& c) {
  const ModelParams params = make_params(c);
  const ManufacturedSolution ms = smooth_solution(params);
  const double mismatch = ms.self_check(params);
  if (!(mismatch <= 1e-10)) {
    throw std::runtime_error("manufactured solution fails its self-check by " + std::to_string(mismatch));
  }
  const ProblemData data = ms.data();
  ConvergenceResult res;
  for (int l = 0; l < c.levels; ++l) {
    try {
      const int n = 2 << l;
      const Mesh mesh = structured_rectangle(n, n, Rectangle{}, SideTags{});
      const FeSpace v = FeSpace::raviart_thomas(mesh, c.degree);
      const FeSpace q = FeSpace::discontinuous(mesh, c.degree);
      const DiscreteProblem prob(params, data, v, q);
      const DiscreteSolution sol = newton_solve(prob, c.solver);
      LevelErrors e;
      e.h = mesh.h();
      e.n_dofs = v.n_dofs() + q.n_dofs();
      e.err_u_h3div = norm_h3div(error_field(sol.u, ms.u, ms.div_u));
      e.err_p_l2 = norm_l2(error_field(sol.p, ms.p));
      e.div_residual_inf = sol.report.div_residual_inf;
      e.newton_iters = sol.report.iterations;
      e.newton_converged = sol.report.converged;
      res.report.levels.push_back(e);
      if (wants(c, "vtk")) write_vtk(sol.u, sol.p, c.output_dir / ("fields_" + std::to_string(l) + ".vtk"));
    } catch (const std::exception& ex) {
      throw level_error(l, ex);
    }
  }
  fill_rates(res, false);
  return res;
}

ConvergenceResult run_ex2(const ExperimentConfig& c) {
  const ModelParams params = make_params(c);
  const ProblemData data = channel_data();
  const int finest = c.levels - 1 + c.reference_levels;
  std::vector<Mesh> meshes;
  meshes.reserve(finest + 1);
  meshes.push_back(structured_rectangle(4, 2, Rectangle{0.0, 0.0, 2.0, 1.0}, channel_tags()));
  for (int l = 1; l <= finest; ++l) meshes.push_back(refine_uniform(meshes.back()));

  const Mesh& fine = meshes[finest];
  const FeSpace v_ref = FeSpace::raviart_thomas(fine, c.degree);
  const FeSpace q_ref = FeSpace::discontinuous(fine, c.degree);
  const DiscreteProblem ref_prob(params, data, v_ref, q_ref);
  const DiscreteSolution ref = newton_solve(ref_prob, c.solver);
  if (!ref.report.converged) throw std::runtime_error("reference solve did not converge");
  const VectorField u_ref = field_of(ref.u);

  ConvergenceResult res;
  for (int l = 0; l < c.levels; ++l) {
    try {
      const Mesh& mesh = meshes[l];
      const FeSpace v = FeSpace::raviart_thomas(mesh, c.degree);
      const FeSpace q = FeSpace::discontinuous(mesh, c.degree);
      const DiscreteProblem prob(params, data, v, q);
      const DiscreteSolution sol = newton_solve(prob, c.solver);
      const std::vector<int> anc = ancestor_map(meshes, l, finest);
      const VectorField u_h = transfer(sol.u, fine, anc);
      const VectorField diff{&fine,
                             [&](int cell, const Vec2& r) -> Vec2 { return u_h.value(cell, r) - u_ref.value(cell, r); },
                             [&](int cell, const Vec2& r) { return u_h.div(cell, r) - u_ref.div(cell, r); }};
      const FeFunction p_h = prolongate_dg(sol.p, q_ref, anc);
      const FeFunction dp(q_ref, p_h.coeffs - ref.p.coeffs);
      // The broken norm lives on the level mesh: compare with the projected
      // reference and linearise around it.
      const FeFunction p_ref_h = restrict_dg(ref.p, q, anc);
      const FeFunction dp_h(q, sol.p.coeffs - p_ref_h.coeffs);
      LevelErrors e;
      e.h = mesh.h();
      e.n_dofs = v.n_dofs() + q.n_dofs();
      e.err_u_h3div = norm_h3div(diff);
      e.err_p_l2 = norm_l2(scalar_field_of(dp));
      e.err_u_V = norm_V(diff, params);
      e.err_p_Qhat = norm_Qhat(dp_h, qhat_operators(p_ref_h, params));
      e.div_residual_inf = sol.report.div_residual_inf;
      e.newton_iters = sol.report.iterations;
      e.newton_converged = sol.report.converged;
      res.report.levels.push_back(e);
      if (wants(c, "vtk")) write_vtk(sol.u, sol.p, c.output_dir / ("fields_" + std::to_string(l) + ".vtk"));
    } catch (const std::exception& ex) {
      throw level_error(l, ex);
    }
  }
  fill_rates(res, true);
  return res;
}

Ex3Result run_ex3(const ExperimentConfig& c) {
  const Mesh mesh = load_mesh(c.mesh_file);
  const ModelParams params = make_params(c);
  const FeSpace v = FeSpace::raviart_thomas(mesh, c.degree);
  const FeSpace q = FeSpace::discontinuous(mesh, c.degree);
  ProblemData data;
  const double force = c.ex3.force;
  data.f = [force](const Vec2&) { return Vec2(force, 0.0); };
  const double radius = c.ex3.inlet_radius, speed = c.ex3.inlet_speed;
  data.flux_bc = [radius, speed](const Vec2& x) -> Vec2 {
    const double d = x.norm();
    return d <= radius * (1.0 + 1e-6) ? Vec2(speed * x / d) : Vec2::Zero();
  };
  const DiscreteProblem prob(params, data, v, q);
  const DiscreteSolution sol = newton_solve(prob, c.solver);

  Ex3Result res;
  res.n_cells = mesh.n_cells();
  res.n_dofs = v.n_dofs() + q.n_dofs();
  res.newton_iterations = sol.report.iterations;
  res.converged = sol.report.converged;
  res.div_residual_inf = sol.report.div_residual_inf;
  // Vertices, edge midpoints and centroid of every cell.
  static const Vec2 probes[7] = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(0.5, 0), Vec2(0.5, 0.5),
                                 Vec2(0, 0.5), Vec2(1.0 / 3.0, 1.0 / 3.0)};
  for (int cell = 0; cell < mesh.n_cells(); ++cell) {
    for (const Vec2& r : probes) res.u_max = std::max(res.u_max, evaluate_vector(sol.u, cell, r).norm());
  }
  Eigen::SelfAdjointEigenSolver<Mat2> es(params.kappa(Vec2::Zero()));
  res.kappa_max = es.eigenvalues().maxCoeff();
  res.threshold = res.kappa_max * params.forchheimer * res.u_max;
  if (wants(c, "vtk")) write_vtk(sol.u, sol.p, c.output_dir / "fields_0.vtk");
  return res;
}

const ConditionCell* ConditionTable::find(double r, double kappa, double forchheimer, int n) const {
  for (const auto& cell : cells) {
    if (cell.r == r && cell.kappa == kappa && cell.forchheimer == forchheimer && cell.n == n) return &cell;
  }
  return nullptr;
}

ConditionCell condition_cell(const ExperimentConfig& c, double r, double kappa, double forchheimer, int n) {
  ConditionCell out{r, kappa, forchheimer, n, 0.0, std::nullopt, {}};
  try {
    const bool channel = c.ex4.domain == "channel";
    const Mesh mesh = channel ? structured_rectangle(2 * n, n, Rectangle{0.0, 0.0, 2.0, 1.0}, channel_tags())
                              : structured_rectangle(n, n, Rectangle{}, SideTags{});
    out.h = 1.0 / n;
    const FeSpace v = FeSpace::raviart_thomas(mesh, c.degree);
    const FeSpace q = FeSpace::discontinuous(mesh, c.degree);
    ModelParams params;
    params.kappa = Permeability::scalar(kappa);
    params.forchheimer = forchheimer;
    params.r = r;
    const ProblemData data = channel ? channel_data() : smooth_solution(params).data();
    const DiscreteProblem prob(params, data, v, q);
    FeFunction u_hat(v), p_hat(q);
    if (c.ex4.state == "darcy") {
      std::tie(u_hat, p_hat) = initial_guess_darcy(prob);
    } else if (c.ex4.state == "newton") {
      DiscreteSolution sol = newton_solve(prob, c.solver);
      if (!sol.report.converged) throw std::runtime_error("Newton did not converge");
      u_hat = std::move(sol.u);
      p_hat = std::move(sol.p);
    }
    const BlockSystem sys = prob.tangent_matrix(u_hat);
    const BlockPreconditioner pc = BlockPreconditioner::build(c.precond, params, u_hat, p_hat);
    out.cond = estimate_condition_number(sys, pc);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

ConditionTable run_ex4(const ExperimentConfig& c) {
  ConditionTable t;
  t.precond = c.precond;
  t.domain = c.ex4.domain;
  t.state = c.ex4.state;
  for (double r : c.ex4.r_values)
    for (double k : c.ex4.kappa_values)
      for (double f : c.ex4.f_values)
        for (int n : c.ex4.n_values) t.cells.push_back({r, k, f, n, 1.0 / n, std::nullopt, {}});

  std::atomic<std::size_t> next{0};
  const auto worker = [&]() {
    for (std::size_t i = next++; i < t.cells.size(); i = next++) {
      const ConditionCell& cell = t.cells[i];
      t.cells[i] = condition_cell(c, cell.r, cell.kappa, cell.forchheimer, cell.n);
    }
  };
  unsigned threads = c.ex4.threads > 0 ? static_cast<unsigned>(c.ex4.threads) : std::thread::hardware_concurrency();
  threads = std::clamp(threads, 1u, static_cast<unsigned>(std::max<std::size_t>(t.cells.size(), 1)));
  std::vector<std::thread> pool;
  for (unsigned i = 1; i < threads; ++i) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return t;
}

// ---------------------------------------------------------------- output

namespace {

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fixed3(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", *v);
  return buf;
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::vector<json> rates_json(const std::vector<std::optional<double>>& r) {
  std::vector<json> out;
  for (const auto& v : r) out.push_back(optional_json(v));
  return out;
}

}  // namespace

json to_json(const ErrorReport& r) {
  json levels = json::array();
  for (const auto& l : r.levels) {
    levels.push_back({{"h", l.h},
                      {"n_dofs", l.n_dofs},
                      {"err_u_h3div", l.err_u_h3div},
                      {"err_p_l2", l.err_p_l2},
                      {"err_u_V", optional_json(l.err_u_V)},
                      {"err_p_Qhat", optional_json(l.err_p_Qhat)},
                      {"div_residual_inf", l.div_residual_inf},
                      {"newton_iters", l.newton_iters},
                      {"newton_converged", l.newton_converged}});
  }
  return json{{"levels", levels}};
}

ErrorReport error_report_from_json(const json& j) {
  ErrorReport r;
  for (const auto& l : j.at("levels")) {
    LevelErrors e;
    e.h = l.at("h").get<double>();
    e.n_dofs = l.at("n_dofs").get<int>();
    e.err_u_h3div = l.at("err_u_h3div").get<double>();
    e.err_p_l2 = l.at("err_p_l2").get<double>();
    if (!l.at("err_u_V").is_null()) e.err_u_V = l.at("err_u_V").get<double>();
    if (!l.at("err_p_Qhat").is_null()) e.err_p_Qhat = l.at("err_p_Qhat").get<double>();
    e.div_residual_inf = l.at("div_residual_inf").get<double>();
    e.newton_iters = l.at("newton_iters").get<int>();
    e.newton_converged = l.at("newton_converged").get<bool>();
    r.levels.push_back(e);
  }
  return r;
}

void emit_report(const ConvergenceResult& res, const std::filesystem::path& dir,
                 const std::vector<std::string>& formats) {
  const auto has = [&](const char* f) { return std::find(formats.begin(), formats.end(), f) != formats.end(); };
  const bool weighted = !res.rate_u_weighted.empty();
  const auto& levels = res.report.levels;
  if (has("csv")) {
    auto err = open_output(dir / "errors.csv");
    err << "level,dofs,h,err_u,err_p";
    if (weighted) err << ",err_u_weighted,err_p_weighted";
    err << ",div_residual,newton_iters,converged\n";
    for (std::size_t i = 0; i < levels.size(); ++i) {
      const auto& l = levels[i];
      err << i << ',' << l.n_dofs << ',' << fixed4(l.h) << ',' << sci(l.err_u_h3div) << ','
          << sci(l.err_p_l2);
      if (weighted) err << ',' << sci(l.err_u_V.value_or(0.0)) << ',' << sci(l.err_p_Qhat.value_or(0.0));
      err << ',' << sci(l.div_residual_inf) << ',' << l.newton_iters << ',' << (l.newton_converged ? 1 : 0)
          << '\n';
    }
    auto rates = open_output(dir / "rates.csv");
    rates << "level,rate_u,rate_p";
    if (weighted) rates << ",rate_u_weighted,rate_p_weighted";
    rates << '\n';
    for (std::size_t i = 0; i < levels.size(); ++i) {
      rates << i << ',' << fixed3(res.rate_u[i]) << ',' << fixed3(res.rate_p[i]);
      if (weighted) rates << ',' << fixed3(res.rate_u_weighted[i]) << ',' << fixed3(res.rate_p_weighted[i]);
      rates << '\n';
    }
  }
  if (has("json")) {
    json j = to_json(res.report);
    j["rate_u"] = rates_json(res.rate_u);
    j["rate_p"] = rates_json(res.rate_p);
    if (weighted) {
      j["rate_u_weighted"] = rates_json(res.rate_u_weighted);
      j["rate_p_weighted"] = rates_json(res.rate_p_weighted);
    }
    open_output(dir / "report.json") << j.dump(2) << '\n';
  }
}

void emit_conditions(const ConditionTable& t, const std::filesystem::path& path) {
  std::vector<int> ns;
  for (const auto& c : t.cells) {
    if (std::find(ns.begin(), ns.end(), c.n) == ns.end()) ns.push_back(c.n);
  }
  auto out = open_output(path);
  out << "# preconditioner=" << to_string(t.precond.variant)
      << " pressure_mode=" << to_string(t.precond.pressure_mode) << " domain=" << t.domain
      << " state=" << t.state << '\n';
  out << "r,kappa,F";
  for (int n : ns) out << ",h=1/" << n;
  out << '\n';
  std::vector<std::tuple<double, double, double>> rows;
  for (const auto& c : t.cells) {
    const auto key = std::make_tuple(c.r, c.kappa, c.forchheimer);
    if (std::find(rows.begin(), rows.end(), key) == rows.end()) rows.push_back(key);
  }
  char buf[64];
  for (const auto& [r, k, f] : rows) {
    std::snprintf(buf, sizeof buf, "%g,%g,%g", r, k, f);
    out << buf;
    for (int n : ns) {
      const ConditionCell* c = t.find(r, k, f, n);
      out << ',';
      if (c && c->cond) {
        std::snprintf(buf, sizeof buf, "%.2f", *c->cond);
        out << buf;
      } else if (c) {
        out << "error";
      }
    }
    out << '\n';
  }
  for (const auto& c : t.cells) {
    if (!c.error.empty()) {
      out << "# r=" << c.r << " kappa=" << c.kappa << " F=" << c.forchheimer << " n=" << c.n << ": " << c.error
          << '\n';
    }
  }
}

void emit_ex3(const Ex3Result& res, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << "cells,dofs,newton_iters,converged,u_max,kappa_max,threshold,div_residual\n";
  out << res.n_cells << ',' << res.n_dofs << ',' << res.newton_iterations << ',' << (res.converged ? 1 : 0)
      << ',' << sci(res.u_max) << ',' << sci(res.kappa_max) << ',' << sci(res.threshold) << ','
      << sci(res.div_residual_inf) << '\n';
}

void write_vtk(const FeFunction& u, const FeFunction& p, const std::filesystem::path& path) {
  const Mesh& mesh = u.space->mesh();
  auto out = open_output(path);
  out << std::setprecision(10);
  out << "# vtk DataFile Version 3.0\ndarcy-forchheimer solution\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.n_vertices() << " double\n";
  for (const Vec2& x : mesh.vertices()) out << x.x() << ' ' << x.y() << " 0\n";
  out << "CELLS " << mesh.n_cells() << ' ' << 4 * mesh.n_cells() << '\n';
  for (const auto& c : mesh.cells()) out << "3 " << c[0] << ' ' << c[1] << ' ' << c[2] << '\n';
  out << "CELL_TYPES " << mesh.n_cells() << '\n';
  for (int c = 0; c < mesh.n_cells(); ++c) out << "5\n";
  const Vec2 centroid(1.0 / 3.0, 1.0 / 3.0);
  out << "CELL_DATA " << mesh.n_cells() << "\nSCALARS velocity_magnitude double 1\nLOOKUP_TABLE default\n";
  for (int c = 0; c < mesh.n_cells(); ++c) out << evaluate_vector(u, c, centroid).norm() << '\n';
  out << "SCALARS pressure double 1\nLOOKUP_TABLE default\n";
  for (int c = 0; c < mesh.n_cells(); ++c) out << evaluate_scalar(p, c, centroid) << '\n';
  out << "VECTORS velocity double\n";
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const Vec2 val = evaluate_vector(u, c, centroid);
    out << val.x() << ' ' << val.y() << " 0\n";
  }
}

}  // namespace dfsolve
