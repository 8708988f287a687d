#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dfsolve/linsolve.hpp"
#include "dfsolve/nlsolve.hpp"

using namespace dfsolve;

namespace {

Mesh square(int n) { return structured_rectangle(n, n, Rectangle{}, SideTags{}); }

Vector random_vector(int n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g;
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

DenseMatrix random_matrix(int rows, int cols, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> g;
  DenseMatrix m(rows, cols);
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i) m(i, j) = g(rng);
  return m;
}

// Tangent system of the homogeneous problem at the rest state.
struct RestProblem {
  Mesh mesh;
  FeSpace v, q;
  ModelParams params;
  BlockSystem sys;

  RestProblem(int n, double kappa, double forchheimer, double r)
      : mesh(square(n)), v(FeSpace::raviart_thomas(mesh, 0)), q(FeSpace::discontinuous(mesh, 0)) {
    params.kappa = Permeability::scalar(kappa);
    params.forchheimer = forchheimer;
    params.r = r;
    const DiscreteProblem prob(params, ProblemData{}, v, q);
    sys = prob.tangent_matrix(FeFunction(v));
    sys.rhs_u = random_vector(sys.n_u(), 3);
    sys.rhs_p = random_vector(sys.n_p(), 4);
  }

  BlockPreconditioner precond(PrecondVariant variant) const {
    PrecondSpec spec;
    spec.variant = variant;
    return BlockPreconditioner::build(spec, params, FeFunction(v), FeFunction(q));
  }
};

}  // namespace

TEST(DirectSolve, IdentityBlockReturnsRhs) {
  BlockSystem sys;
  sys.A = SparseMatrix(7, 7);
  sys.A.setIdentity();
  sys.B = SparseMatrix(0, 7);
  sys.rhs_u = random_vector(7, 1);
  sys.rhs_p = Vector(0);
  const auto [u, p] = solve_direct(sys);
  EXPECT_LT((u - sys.rhs_u).norm(), 1e-15);
  EXPECT_EQ(p.size(), 0);
}

TEST(DirectSolve, RandomSaddleMatchesDenseSolve) {
  const int nu = 60, np = 20;
  const DenseMatrix g = random_matrix(nu, nu, 5);
  const DenseMatrix a = g * g.transpose() + nu * DenseMatrix::Identity(nu, nu);
  const DenseMatrix b = random_matrix(np, nu, 6);
  BlockSystem sys;
  sys.A = a.sparseView();
  sys.B = b.sparseView();
  sys.rhs_u = random_vector(nu, 7);
  sys.rhs_p = random_vector(np, 8);
  DenseMatrix k = DenseMatrix::Zero(nu + np, nu + np);
  k.topLeftCorner(nu, nu) = a;
  k.topRightCorner(nu, np) = b.transpose();
  k.bottomLeftCorner(np, nu) = b;
  const Vector oracle = k.fullPivLu().solve(sys.rhs());
  const auto [u, p] = solve_direct(sys);
  EXPECT_LT((u - oracle.head(nu)).norm(), 1e-10 * oracle.norm());
  EXPECT_LT((p - oracle.tail(np)).norm(), 1e-10 * oracle.norm());
}

TEST(DirectSolve, SingularSystemThrows) {
  BlockSystem sys;
  sys.A = SparseMatrix(3, 3);
  sys.A.insert(0, 0) = 1.0;
  sys.B = SparseMatrix(0, 3);
  sys.rhs_u = Vector::Ones(3);
  sys.rhs_p = Vector(0);
  EXPECT_THROW(solve_direct(sys), SolverError);
}

TEST(DirectSolve, TangentSystemResidual) {
  const RestProblem rp(6, 1.0, 1.0, 3.5);
  const auto [u, p] = solve_direct(rp.sys);
  Vector x(u.size() + p.size());
  x << u, p;
  EXPECT_LT((rp.sys.saddle() * x - rp.sys.rhs()).norm(), 1e-10 * rp.sys.rhs().norm());
}

TEST(Preconditioner, VelocityBlockMatchesDenseInverse) {
  const RestProblem rp(3, 1.0, 0.0, 3.0);
  const BlockPreconditioner pc = rp.precond(PrecondVariant::IntersectionSum);
  // (u, v) + (div u, div v) = A + b^T M^{-1} b, since div RT_0 lies in DG_0.
  const DenseMatrix a(rp.sys.A), b(rp.sys.B), m(assemble_mass(rp.q));
  const DenseMatrix riesz = a + b.transpose() * m.inverse() * b;
  const Vector r = random_vector(pc.n_u(), 9);
  const Vector oracle = riesz.llt().solve(r);
  EXPECT_LT((pc.apply_velocity(r) - oracle).norm(), 1e-10 * oracle.norm());
}

TEST(Preconditioner, PressureBlockSumsInverses) {
  const RestProblem rp(3, 1.0, 0.0, 3.0);
  const BlockPreconditioner pc = rp.precond(PrecondVariant::IntersectionSum);
  ASSERT_EQ(pc.pressure_blocks().size(), 2u);
  const DenseMatrix m(assemble_mass(rp.q)), lap(assemble_pressure_laplacian(rp.params.kappa, rp.q));
  const Vector r = random_vector(pc.n_p(), 10);
  const Vector oracle = m.llt().solve(r) + lap.llt().solve(r);
  EXPECT_LT((pc.apply_pressure(r) - oracle).norm(), 1e-10 * oracle.norm());
}

TEST(Preconditioner, NoneIsIdentity) {
  const RestProblem rp(2, 1.0, 1.0, 3.0);
  const BlockPreconditioner pc = rp.precond(PrecondVariant::None);
  const Vector r = random_vector(pc.n_u() + pc.n_p(), 11);
  EXPECT_EQ(pc.apply(r), r);
}

TEST(Preconditioner, ApplicationIsPositive) {
  for (PrecondVariant variant : {PrecondVariant::IntersectionSum, PrecondVariant::ScaledRiesz}) {
    const RestProblem rp(4, 1e-4, 1e3, 3.0);
    const BlockPreconditioner pc = rp.precond(variant);
    for (unsigned s = 0; s < 100; ++s) {
      const Vector r = random_vector(pc.n_u() + pc.n_p(), 100 + s);
      EXPECT_GT(r.dot(pc.apply(r)), 0.0) << to_string(variant);
    }
  }
}

TEST(Preconditioner, RequiresPressureBoundary) {
  SideTags tags;
  tags.right = tags.top = BoundaryTag::GammaU;
  const Mesh m = structured_rectangle(2, 2, Rectangle{}, tags);
  const FeSpace v = FeSpace::raviart_thomas(m, 0), q = FeSpace::discontinuous(m, 0);
  EXPECT_THROW(BlockPreconditioner::build(PrecondSpec{}, ModelParams{}, FeFunction(v), FeFunction(q)),
               std::invalid_argument);
}

TEST(Preconditioner, NamesRoundTrip) {
  for (auto v : {PrecondVariant::IntersectionSum, PrecondVariant::ScaledRiesz, PrecondVariant::None})
    EXPECT_EQ(parse_precond_variant(to_string(v)), v);
  for (auto m : {PressureMode::SumOfInverses, PressureMode::CanonicalInverse})
    EXPECT_EQ(parse_pressure_mode(to_string(m)), m);
  EXPECT_THROW(parse_precond_variant("jacobi"), std::invalid_argument);
}

TEST(Minres, ExactInverseConvergesImmediately) {
  const int n = 40;
  const DenseMatrix g = random_matrix(n, n, 12);
  const DenseMatrix a = g * g.transpose() + DenseMatrix::Identity(n, n);
  const SparseMatrix as = a.sparseView();
  const Eigen::LLT<DenseMatrix> llt(a);
  const Vector b = random_vector(n, 13);
  const auto [x, rep] = minres(as, b, [&llt](const Vector& r) -> Vector { return llt.solve(r); }, 1e-12, 10);
  EXPECT_TRUE(rep.converged);
  EXPECT_LE(rep.iterations, 2);
  EXPECT_LT((x - llt.solve(b)).norm(), 1e-10 * x.norm());
}

TEST(Minres, AgreesWithDirectSolve) {
  for (PrecondVariant variant : {PrecondVariant::IntersectionSum, PrecondVariant::ScaledRiesz}) {
    const RestProblem rp(8, 1.0, 1.0, 3.0);
    const BlockPreconditioner pc = rp.precond(variant);
    const auto [sol, rep] = minres_solve(rp.sys, pc, 1e-10, 500);
    ASSERT_TRUE(rep.converged) << to_string(variant);
    EXPECT_FALSE(rep.breakdown);
    const auto [u, p] = solve_direct(rp.sys);
    Vector d(u.size() + p.size()), e(u.size() + p.size());
    d << sol.first - u, sol.second - p;
    e << u, p;
    EXPECT_LT(d.norm(), 1e-8 * e.norm()) << to_string(variant);
  }
}

TEST(Minres, IterationsBoundedUnderRefinement) {
  for (double kappa : {1.0, 1e-8}) {
    const RestProblem coarse(8, kappa, 1.0, 3.0), fine(16, kappa, 1.0, 3.0);
    const auto a = minres_solve(coarse.sys, coarse.precond(PrecondVariant::IntersectionSum), 1e-8, 500).second;
    const auto b = minres_solve(fine.sys, fine.precond(PrecondVariant::IntersectionSum), 1e-8, 500).second;
    ASSERT_TRUE(a.converged && b.converged);
    EXPECT_LE(std::abs(a.iterations - b.iterations), 5) << a.iterations << " vs " << b.iterations;
    EXPECT_LE(b.iterations, 60);
  }
}

TEST(Minres, FlagsIndefinitePreconditioner) {
  const int n = 10;
  SparseMatrix a(n, n);
  a.setIdentity();
  const auto [x, rep] = minres(a, Vector::Ones(n), [](const Vector& r) -> Vector { return -r; }, 1e-10, 10);
  EXPECT_TRUE(rep.breakdown);
  EXPECT_FALSE(rep.converged);
}

TEST(Condition, ExactPreconditionerGivesOne) {
  const RestProblem rp(3, 1.0, 0.0, 3.0);
  const BlockPreconditioner pc = rp.precond(PrecondVariant::IntersectionSum);
  // K = R_u measured in the metric R_u: every eigenvalue is 1.
  BlockSystem sys;
  sys.A = pc.velocity_matrix();
  sys.B = SparseMatrix(0, pc.n_u());
  const BlockPreconditioner exact = BlockPreconditioner::identity(pc.n_u(), 0);
  std::vector<double> spectrum;
  ConditionOptions opts;
  opts.spectrum = &spectrum;
  const double cond = estimate_condition_number(sys, exact, opts);
  EXPECT_GT(cond, 1.0);  // identity metric, so this is cond(R_u)
  sys.A.setIdentity();
  EXPECT_NEAR(estimate_condition_number(sys, exact), 1.0, 1e-8);
}

TEST(Condition, UnpreconditionedDegradesWithPermeability) {
  const RestProblem soft(4, 1.0, 1.0, 3.0), tight(4, 1e-8, 1.0, 3.0);
  const double a = estimate_condition_number(soft.sys, soft.precond(PrecondVariant::None));
  const double b = estimate_condition_number(tight.sys, tight.precond(PrecondVariant::None));
  EXPECT_GT(b / a, 1e3);
}

TEST(Condition, ScaledPreconditionerMatchesModeAnalysis) {
  // Constant weight: the spectrum is {1, -sigma/(1+sigma)} over the
  // eigenvalues sigma of the mixed Laplacian, so cond = 1 + 1/sigma_min.
  // On the unit square with p = 0 on the right edge only, the smallest
  // continuous eigenvalue is pi^2/4.
  SideTags tags;
  tags.top = BoundaryTag::GammaU;
  const Mesh m = structured_rectangle(16, 16, Rectangle{}, tags);
  const FeSpace v = FeSpace::raviart_thomas(m, 0), q = FeSpace::discontinuous(m, 0);
  ModelParams params;
  params.forchheimer = 0.0;
  const DiscreteProblem prob(params, ProblemData{}, v, q);
  PrecondSpec spec;
  spec.variant = PrecondVariant::ScaledRiesz;
  const double cond = estimate_condition_number(
      prob.tangent_matrix(FeFunction(v)), BlockPreconditioner::build(spec, params, FeFunction(v), FeFunction(q)));
  EXPECT_NEAR(cond, 1.0 + 4.0 / (M_PI * M_PI), 5e-3);
}

TEST(Condition, LanczosAgreesWithDense) {
  for (PrecondVariant variant : {PrecondVariant::IntersectionSum, PrecondVariant::ScaledRiesz}) {
    const RestProblem rp(6, 1e-4, 1.0, 3.0);
    const BlockPreconditioner pc = rp.precond(variant);
    const double dense = estimate_condition_number(rp.sys, pc);
    ConditionOptions opts;
    opts.dense_threshold = 0;
    opts.lanczos_tol = 1e-10;
    const double lanczos = estimate_condition_number(rp.sys, pc, opts);
    EXPECT_NEAR(lanczos, dense, 1e-4 * dense) << to_string(variant);
  }
}

TEST(Condition, LargeSystemWithoutLanczosThrows) {
  const RestProblem rp(3, 1.0, 1.0, 3.0);
  ConditionOptions opts;
  opts.dense_threshold = 10;
  opts.allow_lanczos = false;
  EXPECT_THROW(estimate_condition_number(rp.sys, rp.precond(PrecondVariant::ScaledRiesz), opts),
               std::invalid_argument);
}

TEST(Kernel, BasisIsDivergenceFree) {
  const RestProblem rp(3, 1.0, 1.0, 3.0);
  const DenseMatrix z = kernel_basis(rp.sys.B);
  Eigen::FullPivLU<DenseMatrix> lu{DenseMatrix(rp.sys.B)};
  EXPECT_EQ(z.cols(), rp.sys.n_u() - lu.rank());
  EXPECT_LT((DenseMatrix(rp.sys.B) * z).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT((z.transpose() * z - DenseMatrix::Identity(z.cols(), z.cols())).norm(), 1e-10);
  for (int j = 0; j < z.cols(); ++j) {
    const FeFunction u(rp.v, extend_velocity(z.col(j), rp.v));
    for (int c = 0; c < rp.mesh.n_cells(); ++c)
      EXPECT_LT(std::abs(evaluate_div(u, c, Vec2(0.2, 0.3))), 1e-10);
  }
}

TEST(Kernel, TangentIsPositiveOnKernel) {
  Mesh m = square(3);
  const FeSpace v = FeSpace::raviart_thomas(m, 0), q = FeSpace::discontinuous(m, 0);
  ModelParams params;
  params.r = 3.5;
  const DiscreteProblem prob(params, ProblemData{}, v, q);
  const FeFunction u_hat = interpolate_rt([](const Vec2& x) { return Vec2(x.y(), -x.x()); }, v);
  const BlockSystem sys = prob.tangent_matrix(u_hat);
  const DenseMatrix z = kernel_basis(sys.B);
  const DenseMatrix az = z.transpose() * DenseMatrix(sys.A) * z;
  Eigen::SelfAdjointEigenSolver<DenseMatrix> es(az);
  EXPECT_GT(es.eigenvalues().minCoeff(), 0.0);
}
