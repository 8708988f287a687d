#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dfsolve/nlsolve.hpp"

using namespace dfsolve;

namespace {

const double pi = M_PI;

Vec2 u_exact(const Vec2& x) {
  return {std::cos(pi * x.x()) * std::sin(pi * x.y()), -std::sin(pi * x.x()) * std::cos(pi * x.y())};
}

double p_exact(const Vec2& x) { return std::sin(pi * x.x()) * std::cos(pi * x.y()); }

// kappa = F = 1; div u = 0.
ProblemData smooth_data(double r) {
  ProblemData d;
  d.f = [r](const Vec2& x) {
    const Vec2 u = u_exact(x);
    const Vec2 grad_p(pi * std::cos(pi * x.x()) * std::cos(pi * x.y()),
                      -pi * std::sin(pi * x.x()) * std::sin(pi * x.y()));
    return Vec2(u + std::pow(u.norm(), r - 2.0) * u + grad_p);
  };
  d.flux_bc = u_exact;
  d.pressure_bc = p_exact;
  return d;
}

Mesh square(int n) { return structured_rectangle(n, n, Rectangle{}, SideTags{}); }

}  // namespace

TEST(Newton, SmoothProblemConvergesQuickly) {
  for (int k : {0, 1}) {
    const Mesh m = square(8);
    const FeSpace v = FeSpace::raviart_thomas(m, k), q = FeSpace::discontinuous(m, k);
    ModelParams params;
    params.r = 3.5;
    const DiscreteProblem prob(params, smooth_data(3.5), v, q);
    const DiscreteSolution sol = newton_solve(prob, NewtonConfig{});
    EXPECT_TRUE(sol.report.converged);
    EXPECT_LE(sol.report.iterations, 4);
    EXPECT_LE(sol.report.div_residual_inf, 1e-10);
    EXPECT_EQ(sol.report.residual_history.size(), static_cast<std::size_t>(sol.report.iterations + 1));
    const auto& h = sol.report.residual_history;
    for (std::size_t i = 2; i < h.size(); ++i) EXPECT_LT(h[i], h[i - 1]);
  }
}

TEST(Newton, DarcyProblemNeedsNoIterations) {
  const Mesh m = square(4);
  const FeSpace v = FeSpace::raviart_thomas(m, 0), q = FeSpace::discontinuous(m, 0);
  ModelParams params;
  params.forchheimer = 0.0;
  ProblemData d = smooth_data(2.0);
  d.f = [](const Vec2& x) {
    return Vec2(u_exact(x) + Vec2(pi * std::cos(pi * x.x()) * std::cos(pi * x.y()),
                                  -pi * std::sin(pi * x.x()) * std::sin(pi * x.y())));
  };
  const DiscreteProblem prob(params, d, v, q);
  const DiscreteSolution sol = newton_solve(prob, NewtonConfig{});
  EXPECT_TRUE(sol.report.converged);
  EXPECT_EQ(sol.report.iterations, 0);
}

TEST(Newton, ResidualVanishesAtSolution) {
  const Mesh m = square(4);
  const FeSpace v = FeSpace::raviart_thomas(m, 1), q = FeSpace::discontinuous(m, 1);
  ModelParams params;
  params.r = 3.0;
  const DiscreteProblem prob(params, smooth_data(3.0), v, q);
  const DiscreteSolution sol = newton_solve(prob, NewtonConfig{});
  EXPECT_LT(prob.residual(sol.u, sol.p).lpNorm<Eigen::Infinity>(), 1e-8);
  // Essential values survive the iteration.
  for (int d : v.constrained_dofs()) EXPECT_DOUBLE_EQ(sol.u.coeffs[d], prob.essential()[d]);
}

TEST(Newton, LineSearchAndDampingConverge) {
  const Mesh m = square(4);
  const FeSpace v = FeSpace::raviart_thomas(m, 0), q = FeSpace::discontinuous(m, 0);
  ModelParams params;
  params.forchheimer = 1e3;
  params.r = 4.0;
  ProblemData d;
  d.flux_bc = u_exact;
  d.f = [](const Vec2& x) { return Vec2(1e3 * Vec2(x.y(), 1.0)); };
  const DiscreteProblem prob(params, d, v, q);
  NewtonConfig cfg;
  cfg.line_search = true;
  cfg.max_iters = 60;
  const DiscreteSolution sol = newton_solve(prob, cfg);
  EXPECT_TRUE(sol.report.converged);
  cfg.line_search = false;
  cfg.damping = 0.5;
  cfg.max_iters = 100;
  const DiscreteSolution damped = newton_solve(prob, cfg);
  EXPECT_TRUE(damped.report.converged);
  // Half steps lose quadratic convergence.
  EXPECT_GT(damped.report.iterations, sol.report.iterations);
  const DiscreteSolution restart = newton_solve(prob, NewtonConfig{}, std::make_pair(damped.u, damped.p));
  EXPECT_TRUE(restart.report.converged);
  EXPECT_LE(restart.report.iterations, 3);
}

TEST(Newton, RejectsInvalidInput) {
  const Mesh m = square(2);
  const FeSpace v = FeSpace::raviart_thomas(m, 0), q = FeSpace::discontinuous(m, 0);
  ModelParams params;
  params.r = 1.5;
  EXPECT_THROW(DiscreteProblem(params, ProblemData{}, v, q), std::invalid_argument);
  params.r = 3.0;
  params.forchheimer = -1.0;
  EXPECT_THROW(DiscreteProblem(params, ProblemData{}, v, q), std::invalid_argument);
  params.forchheimer = 1.0;
  EXPECT_THROW(DiscreteProblem(params, ProblemData{}, q, v), std::invalid_argument);
  const DiscreteProblem prob(params, ProblemData{}, v, q);
  NewtonConfig cfg;
  cfg.damping = 0.0;
  EXPECT_THROW(newton_solve(prob, cfg), std::invalid_argument);
}

TEST(Newton, NonConvergenceIsReported) {
  const Mesh m = square(4);
  const FeSpace v = FeSpace::raviart_thomas(m, 0), q = FeSpace::discontinuous(m, 0);
  ModelParams params;
  params.r = 3.5;
  const DiscreteProblem prob(params, smooth_data(3.5), v, q);
  NewtonConfig cfg;
  cfg.max_iters = 1;
  cfg.tol_abs = 1e-300;
  cfg.tol_rel = 0.0;
  const DiscreteSolution sol = newton_solve(prob, cfg);
  EXPECT_FALSE(sol.report.converged);
  EXPECT_EQ(sol.report.iterations, 1);
}

TEST(Monotonicity, ForchheimerOperatorOnRandomPairs) {
  // (A u + c(u) - A v - c(v), u - v) >= 0 for the discrete velocity operator.
  const Mesh m = square(3);
  std::mt19937 rng(2024);
  std::normal_distribution<double> g;
  for (int k : {0, 1}) {
    const FeSpace v = FeSpace::raviart_thomas(m, k);
    ModelParams params;
    params.r = 3.5;
    params.forchheimer = 10.0;
    const SparseMatrix a = assemble_a(params, v);
    for (int trial = 0; trial < 250; ++trial) {
      FeFunction x(v), y(v);
      const double scale = std::pow(10.0, trial % 5 - 2);
      for (int i = 0; i < v.n_dofs(); ++i) {
        x.coeffs[i] = scale * g(rng);
        y.coeffs[i] = scale * g(rng);
      }
      const Vector d = x.coeffs - y.coeffs;
      const double lhs = d.dot(a * d + assemble_c_residual(x, params) - assemble_c_residual(y, params));
      EXPECT_GE(lhs, -1e-12 * d.squaredNorm());
    }
  }
}
