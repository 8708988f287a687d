#include "dfsolve/nlsolve.hpp"

#include <cmath>

#include "dfsolve/linsolve.hpp"

namespace dfsolve {

DiscreteProblem::DiscreteProblem(const ModelParams& params, const ProblemData& data,
                                 const FeSpace& velocity, const FeSpace& pressure)
    : params_(params), data_(data), velocity_(&velocity), pressure_(&pressure) {
  if (!velocity.is_rt() || pressure.is_rt() || &velocity.mesh() != &pressure.mesh()) {
    throw std::invalid_argument("expected an RT velocity space and a DG pressure space on one mesh");
  }
  if (params.r < 2.0) throw std::invalid_argument("Forchheimer index r must be >= 2");
  if (params.forchheimer < 0.0) throw std::invalid_argument("Forchheimer coefficient must be >= 0");
  a_ = assemble_a(params, velocity);
  b_full_ = assemble_b(velocity, pressure);
  b_ = -restrict_velocity_columns(b_full_, velocity);
  auto [fu, gp] = assemble_rhs(data.f, data.g, velocity, pressure);
  load_u_ = fu - assemble_pressure_boundary_load(data.pressure_bc, velocity);
  load_p_ = gp;
  essential_ = essential_values(data.flux_bc, velocity);
  pressure_mass_.compute(assemble_mass(pressure));
}

Vector DiscreteProblem::residual(const FeFunction& u, const FeFunction& p) const {
  const Vector ru = a_ * u.coeffs + assemble_c_residual(u, params_) -
                    b_full_.transpose() * p.coeffs - load_u_;
  const Vector rp = -(b_full_ * u.coeffs) + load_p_;
  Vector out(b_.cols() + rp.size());
  out << restrict_velocity(ru, *velocity_), rp;
  return out;
}

BlockSystem DiscreteProblem::tangent_matrix(const FeFunction& u) const {
  BlockSystem sys;
  sys.A = restrict_velocity(SparseMatrix(a_ + assemble_newton_hessian(u, params_)), *velocity_);
  sys.B = b_;
  sys.velocity = velocity_;
  sys.pressure = pressure_;
  return sys;
}

BlockSystem DiscreteProblem::darcy_matrix() const {
  BlockSystem sys;
  sys.A = restrict_velocity(a_, *velocity_);
  sys.B = b_;
  sys.velocity = velocity_;
  sys.pressure = pressure_;
  return sys;
}

BlockSystem DiscreteProblem::tangent(const FeFunction& u, const FeFunction& p) const {
  BlockSystem sys = tangent_matrix(u);
  const Vector r = residual(u, p);
  sys.rhs_u = -r.head(sys.n_u());
  sys.rhs_p = -r.tail(sys.n_p());
  return sys;
}

double DiscreteProblem::divergence_residual(const FeFunction& u) const {
  const Vector coeffs = pressure_mass_.solve(b_full_ * u.coeffs - load_p_);
  // DG_0 coefficients are cell values; DG_1 nodal coefficients bound the
  // cellwise maximum of a linear function.
  return coeffs.size() == 0 ? 0.0 : coeffs.cwiseAbs().maxCoeff();
}

void DiscreteProblem::update(FeFunction& u, FeFunction& p, const Vector& step, double length) const {
  const int nu = static_cast<int>(b_.cols());
  u.coeffs += length * extend_velocity(step.head(nu), *velocity_);
  p.coeffs += length * step.tail(step.size() - nu);
}

std::pair<FeFunction, FeFunction> initial_guess_darcy(const DiscreteProblem& problem) {
  FeFunction u(problem.velocity(), problem.essential());
  FeFunction p(problem.pressure());
  // With F = 0 the residual is affine, so one linear solve is exact.
  BlockSystem sys = problem.darcy_matrix();
  const Vector r = problem.residual(u, p);
  // The Darcy residual at the lift is the full residual without c(u).
  const Vector c = restrict_velocity(assemble_c_residual(u, problem.params()), problem.velocity());
  sys.rhs_u = -(r.head(sys.n_u()) - c);
  sys.rhs_p = -r.tail(sys.n_p());
  const auto [du, dp] = solve_direct(sys);
  Vector step(du.size() + dp.size());
  step << du, dp;
  problem.update(u, p, step, 1.0);
  return {u, p};
}

DiscreteSolution newton_solve(const DiscreteProblem& problem, const NewtonConfig& config,
                              std::optional<std::pair<FeFunction, FeFunction>> guess) {
  if (!(config.damping > 0.0 && config.damping <= 1.0)) {
    throw std::invalid_argument("damping must lie in (0, 1]");
  }
  auto [u, p] = guess ? *guess : initial_guess_darcy(problem);
  // Essential values are imposed exactly whatever the guess.
  for (int d : problem.velocity().constrained_dofs()) u.coeffs[d] = problem.essential()[d];

  NewtonReport rep;
  double res = problem.residual(u, p).lpNorm<Eigen::Infinity>();
  rep.residual_history.push_back(res);
  const double target = std::max(config.tol_abs, config.tol_rel * res);
  while (res > target && rep.iterations < config.max_iters) {
    const BlockSystem sys = problem.tangent(u, p);
    const auto [du, dp] = solve_direct(sys);
    Vector step(du.size() + dp.size());
    step << du, dp;
    double length = config.damping;
    FeFunction u_try = u, p_try = p;
    problem.update(u_try, p_try, step, length);
    double res_try = problem.residual(u_try, p_try).lpNorm<Eigen::Infinity>();
    if (config.line_search) {
      for (int halving = 0; halving < 20 && !(res_try < res); ++halving) {
        length *= 0.5;
        u_try = u;
        p_try = p;
        problem.update(u_try, p_try, step, length);
        res_try = problem.residual(u_try, p_try).lpNorm<Eigen::Infinity>();
      }
    }
    u = std::move(u_try);
    p = std::move(p_try);
    res = res_try;
    ++rep.iterations;
    rep.residual_history.push_back(res);
    if (!std::isfinite(res)) break;
  }
  rep.converged = res <= target;
  rep.div_residual_inf = problem.divergence_residual(u);
  return {std::move(u), std::move(p), std::move(rep)};
}

}  // namespace dfsolve
