#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "dfsolve/linsolve.hpp"
#include "dfsolve/nlsolve.hpp"
#include "dfsolve/norms.hpp"

namespace dfsolve {

enum class Experiment { Ex1, Ex2, Ex3, Ex4, Custom };

std::string to_string(Experiment e);
Experiment parse_experiment(const std::string& s);

/// Permeability description as it appears in a config file.
struct KappaSpec {
  std::string type = "constant";  ///< constant | heterogeneous-ex2 | tensor-ex3
  double value = 1.0;             ///< constant value, or kappa_0 for heterogeneous-ex2
};

struct Ex4Settings {
  std::vector<double> r_values{3.0, 4.0, 5.0};
  std::vector<double> kappa_values{1e-8, 1e-4, 1.0};
  std::vector<double> f_values{1.0, 1e3, 1e9};
  std::vector<int> n_values{4, 8, 16};  ///< squares per unit length, h = 1/n
  /// unit_square (Ex.1 boundary conditions) or channel ((0,2)x(0,1), p = 0 on the right).
  std::string domain = "unit_square";
  /// rest (u_hat = 0), darcy (Ex.1 data, F = 0 solve) or newton (Ex.1 data, full solve).
  std::string state = "rest";
  int threads = 0;  ///< 0: hardware concurrency
};

struct Ex3Settings {
  /// The inlet is the GammaU arc of this radius around the origin.
  double inlet_radius = 0.02;
  double inlet_speed = 0.25;
  double force = 1.3e-5;  ///< body force along x
};

struct ExperimentConfig {
  Experiment experiment = Experiment::Ex1;
  int degree = 0;
  int levels = 5;
  KappaSpec kappa;
  double forchheimer = 1.0;
  double r = 3.5;
  NewtonConfig solver;
  PrecondSpec precond;
  std::filesystem::path output_dir = "results";
  std::vector<std::string> formats{"csv", "json"};
  /// Ex.2: extra refinements of the reference solution.
  int reference_levels = 2;
  /// Ex.3: mesh file; relative paths resolve against the working directory.
  std::filesystem::path mesh_file = "data/ex3_obstacles.msh";
  Ex3Settings ex3;
  Ex4Settings ex4;
};

/// Defaults for each experiment.
ExperimentConfig default_config(Experiment e);

nlohmann::json to_json(const ExperimentConfig& c);
/// Fields missing from `j` keep the values of `base`. Unknown keys and bad
/// values throw std::invalid_argument naming the key.
ExperimentConfig config_from_json(const nlohmann::json& j, const ExperimentConfig& base);
ExperimentConfig config_from_json(const nlohmann::json& j);

Permeability make_permeability(const KappaSpec& k);
ModelParams make_params(const ExperimentConfig& c);

/// Smooth solution of the smooth test: u, p and the data they generate.
struct ManufacturedSolution {
  VectorFn u;
  ScalarFn p;
  ScalarFn div_u;
  VectorFn grad_p;
  VectorFn f;
  ScalarFn g;
  std::string note;

  ProblemData data() const;
  /// Largest mismatch of f - (kappa^{-1} u + F |u|^{r-2} u + grad p) and
  /// g - div u at `samples` pseudo-random points, with derivatives taken by
  /// sixth-order central differences.
  double self_check(const ModelParams& params, int samples = 32) const;
};

/// p = sin(pi x) cos(pi y), u = (cos(pi x) sin(pi y), -sin(pi x) cos(pi y)).
ManufacturedSolution smooth_solution(const ModelParams& params);

struct ConvergenceResult {
  ErrorReport report;
  std::vector<std::optional<double>> rate_u;
  std::vector<std::optional<double>> rate_p;
  std::vector<std::optional<double>> rate_u_weighted;
  std::vector<std::optional<double>> rate_p_weighted;
};

/// Smooth test on the unit square; GammaU = left + bottom. Throws if the
/// manufactured solution fails its self-check.
ConvergenceResult run_ex1(const ExperimentConfig& c);
/// Channel (0,2)x(0,1) with inflow 2.5 y(1-y) on the left, errors against a
/// finer reference solution. Unweighted errors and the V error are taken on
/// the reference mesh; the broken pressure norm on each level's own mesh,
/// against the L2 projection of the reference pressure.
ConvergenceResult run_ex2(const ExperimentConfig& c);

struct Ex3Result {
  int n_cells = 0;
  int n_dofs = 0;
  int newton_iterations = 0;
  bool converged = false;
  double u_max = 0.0;
  double kappa_max = 0.0;
  double threshold = 0.0;  ///< kappa_max F |u|_max
  double div_residual_inf = 0.0;
};

Ex3Result run_ex3(const ExperimentConfig& c);

struct ConditionCell {
  double r = 0.0;
  double kappa = 0.0;
  double forchheimer = 0.0;
  int n = 0;
  double h = 0.0;
  std::optional<double> cond;
  std::string error;  ///< set when the estimate failed
};

struct ConditionTable {
  PrecondSpec precond;
  std::string domain;
  std::string state;
  std::vector<ConditionCell> cells;

  const ConditionCell* find(double r, double kappa, double forchheimer, int n) const;
};

/// Condition numbers of the preconditioned tangent over the Ex.4 grid. Cells
/// are independent and run in parallel; failures are recorded per cell.
ConditionTable run_ex4(const ExperimentConfig& c);
/// One cell of the grid.
ConditionCell condition_cell(const ExperimentConfig& c, double r, double kappa, double forchheimer,
                             int n);

/// errors.csv, rates.csv and report.json under `dir` as selected by `formats`.
void emit_report(const ConvergenceResult& res, const std::filesystem::path& dir,
                 const std::vector<std::string>& formats);
/// cond.csv as a table: one row per (r, kappa, F),
/// one column per h.
void emit_conditions(const ConditionTable& t, const std::filesystem::path& path);
void emit_ex3(const Ex3Result& res, const std::filesystem::path& path);

nlohmann::json to_json(const ErrorReport& r);
ErrorReport error_report_from_json(const nlohmann::json& j);

/// Legacy ASCII VTK with cellwise |u|, u and p at the centroids.
void write_vtk(const FeFunction& u, const FeFunction& p, const std::filesystem::path& path);

}  // namespace dfsolve
