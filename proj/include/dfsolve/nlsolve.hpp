#pragma once

#include <optional>
#include <vector>

#include "dfsolve/common.hpp"
#include "dfsolve/fespace.hpp"
#include "dfsolve/forms.hpp"

namespace dfsolve {

struct NewtonConfig {
  double tol_abs = 1e-8;   ///< on the max-norm of the algebraic residual
  double tol_rel = 1e-10;  ///< relative to the residual of the initial guess
  int max_iters = 25;
  double damping = 1.0;    ///< fixed step length in (0, 1]
  bool line_search = false;  ///< halve the step until the residual decreases
};

/// Data of  kappa^{-1} u + F |u|^{r-2} u + grad p = f,  div u = g,
/// u . n = flux_bc . n on GammaU,  p = pressure_bc on GammaP.
struct ProblemData {
  VectorFn f = [](const Vec2&) { return Vec2::Zero(); };
  ScalarFn g = [](const Vec2&) { return 0.0; };
  VectorFn flux_bc = [](const Vec2&) { return Vec2::Zero(); };
  ScalarFn pressure_bc = [](const Vec2&) { return 0.0; };
};

struct NewtonReport {
  int iterations = 0;
  bool converged = false;
  std::vector<double> residual_history;  ///< entry 0 is the initial guess
  /// max over cells of |P_h(div u_h - g)|
  double div_residual_inf = 0.0;
};

struct DiscreteSolution {
  FeFunction u;
  FeFunction p;
  NewtonReport report;
};

/// Caches the state-independent parts of the discrete problem.
class DiscreteProblem {
 public:
  DiscreteProblem(const ModelParams& params, const ProblemData& data, const FeSpace& velocity,
                  const FeSpace& pressure);

  const ModelParams& params() const { return params_; }
  const FeSpace& velocity() const { return *velocity_; }
  const FeSpace& pressure() const { return *pressure_; }

  /// Velocity coefficients with the essential values on GammaU and zero elsewhere.
  const Vector& essential() const { return essential_; }

  /// Residual on free velocity dofs stacked over pressure dofs.
  Vector residual(const FeFunction& u, const FeFunction& p) const;
  /// Tangent system at (u, p), right-hand side = -residual.
  BlockSystem tangent(const FeFunction& u, const FeFunction& p) const;
  /// Tangent matrix only, rhs left empty.
  BlockSystem tangent_matrix(const FeFunction& u) const;
  /// The matrix with F = 0, rhs left empty.
  BlockSystem darcy_matrix() const;

  /// max_K |P_h(div u - g)| on the pressure space.
  double divergence_residual(const FeFunction& u) const;

  /// Applies a free-dof velocity increment and a pressure increment.
  void update(FeFunction& u, FeFunction& p, const Vector& step, double length) const;

 private:
  ModelParams params_;
  ProblemData data_;
  const FeSpace* velocity_;
  const FeSpace* pressure_;
  SparseMatrix a_;       // full velocity space
  SparseMatrix b_full_;  // +int q div v
  SparseMatrix b_;       // -b_h on free velocity dofs
  Vector load_u_;        // (f, v) - <p_D, v . n>
  Vector load_p_;        // (g, q)
  Vector essential_;
  Eigen::SimplicialLLT<SparseMatrix> pressure_mass_;
};

/// Solution of the linear Darcy problem (F = 0) with the same data.
std::pair<FeFunction, FeFunction> initial_guess_darcy(const DiscreteProblem& problem);

/// Newton iteration from the given guess (default: the Darcy solution).
/// Converged when the residual norm drops below tol_abs or tol_rel times
/// the initial residual. Does not throw on non-convergence; check the report.
DiscreteSolution newton_solve(const DiscreteProblem& problem, const NewtonConfig& config,
                              std::optional<std::pair<FeFunction, FeFunction>> guess = {});

}  // namespace dfsolve
