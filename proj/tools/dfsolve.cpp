// dfsolve: convergence studies and condition-number tables.
//
//   dfsolve run --experiment ex1 --degree 0 --levels 7 --out results/
//   dfsolve run --config my.json --levels 3
//   dfsolve cond --precond intersection --grid default
//
// Settings are layered: experiment defaults, then --config, then flags.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dfsolve/harness.hpp"

using namespace dfsolve;

namespace {

struct Overrides {
  std::string experiment;
  std::string config_file;
  std::optional<int> degree;
  std::optional<int> levels;
  std::string out;
  std::string precond;
  std::string pressure_mode;
  std::string mesh;
  std::string domain;
  std::string state;
  std::string grid;
  std::optional<int> threads;
};

ExperimentConfig resolve(const Overrides& o, Experiment fallback) {
  nlohmann::json file;
  if (!o.config_file.empty()) {
    std::ifstream in(o.config_file);
    if (!in) throw std::runtime_error("cannot open config file " + o.config_file);
    try {
      file = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw std::runtime_error(o.config_file + ": " + e.what());
    }
  }
  Experiment e = fallback;
  if (!o.experiment.empty()) {
    e = parse_experiment(o.experiment);
  } else if (file.is_object() && file.contains("experiment")) {
    e = parse_experiment(file.at("experiment").get<std::string>());
  }
  ExperimentConfig c = default_config(e);
  if (!file.is_null()) c = config_from_json(file, c);
  c.experiment = e;
  if (o.degree) c.degree = *o.degree;
  if (o.levels) c.levels = *o.levels;
  if (!o.out.empty()) c.output_dir = o.out;
  if (!o.precond.empty()) c.precond.variant = parse_precond_variant(o.precond);
  if (!o.pressure_mode.empty()) c.precond.pressure_mode = parse_pressure_mode(o.pressure_mode);
  if (!o.mesh.empty()) c.mesh_file = o.mesh;
  if (!o.domain.empty()) c.ex4.domain = o.domain;
  if (!o.state.empty()) c.ex4.state = o.state;
  if (o.threads) c.ex4.threads = *o.threads;
  if (o.grid == "small") {
    c.ex4.n_values = {4, 8};
  } else if (!o.grid.empty() && o.grid != "default") {
    throw std::invalid_argument("unknown grid '" + o.grid + "' (default | small)");
  }
  // Re-validate after the flags.
  return config_from_json(to_json(c));
}

void print_levels(const ConvergenceResult& res) {
  const bool weighted = !res.rate_u_weighted.empty();
  std::printf("%8s %7s %10s %6s %10s %6s", "dofs", "h", "err_u", "rate", "err_p", "rate");
  if (weighted) std::printf(" %10s %6s %10s %6s", "err_u_w", "rate", "err_p_w", "rate");
  std::printf(" %9s %3s\n", "div", "it");
  const auto rate = [](const std::optional<double>& r) {
    char buf[16];
    if (r) {
      std::snprintf(buf, sizeof buf, "%6.3f", *r);
    } else {
      std::snprintf(buf, sizeof buf, "%6s", "*");
    }
    return std::string(buf);
  };
  for (std::size_t i = 0; i < res.report.levels.size(); ++i) {
    const auto& l = res.report.levels[i];
    std::printf("%8d %7.4f %10.2e %s %10.2e %s", l.n_dofs, l.h, l.err_u_h3div, rate(res.rate_u[i]).c_str(),
                l.err_p_l2, rate(res.rate_p[i]).c_str());
    if (weighted) {
      std::printf(" %10.2e %s %10.2e %s", l.err_u_V.value_or(0.0), rate(res.rate_u_weighted[i]).c_str(),
                  l.err_p_Qhat.value_or(0.0), rate(res.rate_p_weighted[i]).c_str());
    }
    std::printf(" %9.2e %3d%s\n", l.div_residual_inf, l.newton_iters, l.newton_converged ? "" : " (not converged)");
  }
}

void print_conditions(const ConditionTable& t) {
  std::printf("preconditioner %s, domain %s, state %s\n", to_string(t.precond.variant).c_str(), t.domain.c_str(),
              t.state.c_str());
  for (const auto& c : t.cells) {
    if (c.cond) {
      std::printf("r=%g kappa=%-6g F=%-6g h=1/%-3d cond %.2f\n", c.r, c.kappa, c.forchheimer, c.n, *c.cond);
    } else {
      std::printf("r=%g kappa=%-6g F=%-6g h=1/%-3d failed: %s\n", c.r, c.kappa, c.forchheimer, c.n, c.error.c_str());
    }
  }
}

int run(const ExperimentConfig& c) {
  std::filesystem::create_directories(c.output_dir);
  std::ofstream(c.output_dir / "config.json") << to_json(c).dump(2) << '\n';
  switch (c.experiment) {
    case Experiment::Ex1:
    case Experiment::Custom: {
      const auto res = run_ex1(c);
      print_levels(res);
      emit_report(res, c.output_dir, c.formats);
      return 0;
    }
    case Experiment::Ex2: {
      const auto res = run_ex2(c);
      print_levels(res);
      emit_report(res, c.output_dir, c.formats);
      return 0;
    }
    case Experiment::Ex3: {
      const auto res = run_ex3(c);
      std::printf("cells %d, dofs %d, Newton %d iterations%s\n", res.n_cells, res.n_dofs, res.newton_iterations,
                  res.converged ? "" : " (not converged)");
      std::printf("|u|max %.4f, kappa_max %.3e, F0 %.4f, div residual %.2e\n", res.u_max, res.kappa_max,
                  res.threshold, res.div_residual_inf);
      emit_ex3(res, c.output_dir / "ex3.csv");
      return res.converged ? 0 : 3;
    }
    case Experiment::Ex4: {
      const auto t = run_ex4(c);
      print_conditions(t);
      emit_conditions(t, c.output_dir / "cond.csv");
      for (const auto& cell : t.cells) {
        if (!cell.cond) return 3;
      }
      return 0;
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed finite element solver for the Darcy-Forchheimer equations"};
  app.require_subcommand(1);
  Overrides o;

  auto* run_cmd = app.add_subcommand("run", "convergence study or single experiment");
  run_cmd->add_option("--experiment", o.experiment, "ex1 | ex2 | ex3 | ex4 | custom")
      ->check(CLI::IsMember({"ex1", "ex2", "ex3", "ex4", "custom"}));
  run_cmd->add_option("--degree", o.degree, "polynomial degree k")->check(CLI::Range(0, 1));
  run_cmd->add_option("--levels", o.levels, "number of refinement levels")->check(CLI::PositiveNumber);
  run_cmd->add_option("--out", o.out, "output directory");
  run_cmd->add_option("--config", o.config_file, "JSON config; flags override it")->check(CLI::ExistingFile);
  run_cmd->add_option("--mesh", o.mesh, "mesh file (ex3)");
  run_cmd->add_option("--precond", o.precond, "intersection | scaled | none (ex4)");

  auto* cond_cmd = app.add_subcommand("cond", "condition numbers of the preconditioned tangent");
  cond_cmd->add_option("--precond", o.precond, "intersection | scaled | none")
      ->check(CLI::IsMember({"intersection", "scaled", "none"}));
  cond_cmd->add_option("--pressure-mode", o.pressure_mode, "sum_of_inverses | canonical_inverse");
  cond_cmd->add_option("--grid", o.grid, "default (h = 1/4, 1/8, 1/16) | small (h = 1/4, 1/8)")
      ->default_str("default");
  cond_cmd->add_option("--domain", o.domain, "unit_square | channel");
  cond_cmd->add_option("--state", o.state, "rest | darcy | newton");
  cond_cmd->add_option("--degree", o.degree, "polynomial degree k")->check(CLI::Range(0, 1));
  cond_cmd->add_option("--threads", o.threads, "worker threads, 0 for all cores");
  cond_cmd->add_option("--out", o.out, "output directory");
  cond_cmd->add_option("--config", o.config_file, "JSON config; flags override it")->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentConfig c = resolve(o, cond_cmd->parsed() ? Experiment::Ex4 : Experiment::Ex1);
    if (cond_cmd->parsed() && c.experiment != Experiment::Ex4) {
      throw std::invalid_argument("cond only runs the ex4 grid");
    }
    const int status = run(c);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("wrote %s (%.1f s)\n", c.output_dir.string().c_str(), secs);
    return status;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "dfsolve: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "dfsolve: %s\n", e.what());
    return 1;
  }
}
