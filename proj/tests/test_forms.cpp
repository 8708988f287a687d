#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dfsolve/forms.hpp"
#include "dfsolve/quadrature.hpp"

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

}  // namespace

TEST(Forms, PermeabilityMassAgainstExactIntegral) {
  const Mesh m = square(3);
  for (int k : {0, 1}) {
    const FeSpace v = FeSpace::raviart_thomas(m, k);
    ModelParams p;
    Mat2 kappa;
    kappa << 2.0, 0.5, 0.5, 1.0;
    p.kappa = Permeability::uniform_tensor(kappa);
    const Vector u = interpolate_rt([](const Vec2&) { return Vec2(1, 2); }, v).coeffs;
    const SparseMatrix a = assemble_a(p, v);
    EXPECT_NEAR(u.dot(a * u), Vec2(1, 2).dot(kappa.inverse() * Vec2(1, 2)), 1e-12);
    EXPECT_LT(max_asymmetry(a), 1e-14);
  }
}

TEST(Forms, VariablePermeabilityUsesPointValues) {
  const Mesh m = square(4);
  const FeSpace v = FeSpace::raviart_thomas(m, 1);
  ModelParams p;
  p.kappa = Permeability::isotropic([](const Vec2& x) { return 1.0 / (1.0 + x.x()); });
  const Vector u = interpolate_rt([](const Vec2&) { return Vec2(1, 0); }, v).coeffs;
  // int (1 + x) dx dy = 3/2
  EXPECT_NEAR(u.dot(assemble_a(p, v) * u), 1.5, 1e-12);
}

TEST(Forms, NonSpdPermeabilityNamesCell) {
  const Mesh m = square(2);
  const FeSpace v = FeSpace::raviart_thomas(m, 0);
  ModelParams p;
  p.kappa = Permeability::isotropic([](const Vec2& x) { return x.x() > 0.5 && x.y() > 0.5 ? -1.0 : 1.0; });
  try {
    assemble_a(p, v);
    FAIL() << "expected AssemblyError";
  } catch (const AssemblyError& e) {
    EXPECT_NE(std::string(e.what()).find("cell"), std::string::npos);
  }
}

TEST(Forms, DivergenceFormIsBoundaryFlux) {
  const Mesh m = square(3);
  for (int k : {0, 1}) {
    const FeSpace v = FeSpace::raviart_thomas(m, k);
    const FeSpace q = FeSpace::discontinuous(m, k);
    const SparseMatrix b = assemble_b(v, q);
    ASSERT_EQ(b.rows(), q.n_dofs());
    ASSERT_EQ(b.cols(), v.n_dofs());
    // q = 1 is the sum of DG basis functions in both degrees.
    const Vector ones = Vector::Ones(q.n_dofs());
    const Vector u = interpolate_rt([](const Vec2& x) { return Vec2(x.x() * x.x(), x.y()); }, v).coeffs;
    // int div u = int_boundary u . n = 1 (right) + 1 (top)
    EXPECT_NEAR(ones.dot(b * u), 2.0, 1e-12);
  }
}

TEST(Forms, ForchheimerResidualAndHessian) {
  const Mesh m = square(3);
  for (int k : {0, 1}) {
    const FeSpace v = FeSpace::raviart_thomas(m, k);
    for (double r : {2.5, 3.0, 3.5}) {
      ModelParams p;
      p.forchheimer = 1.7;
      p.r = r;
      const FeFunction uc = interpolate_rt([](const Vec2&) { return Vec2(1, 2); }, v);
      EXPECT_NEAR(uc.coeffs.dot(assemble_c_residual(uc, p)), 1.7 * std::pow(5.0, r / 2), 1e-11);

      FeFunction u(v, random_vector(v.n_dofs(), 5));
      const SparseMatrix h = assemble_newton_hessian(u, p);
      EXPECT_LT(max_asymmetry(h), 1e-14 * h.norm());
      const Vector dir = random_vector(v.n_dofs(), 9);
      const double t = 1e-6;
      FeFunction up(v, u.coeffs + t * dir), um(v, u.coeffs - t * dir);
      const Vector fd = (assemble_c_residual(up, p) - assemble_c_residual(um, p)) / (2 * t);
      EXPECT_LT((fd - h * dir).norm() / fd.norm(), 1e-5) << "k=" << k << " r=" << r;
    }
  }
}

TEST(Forms, TangentWeightAtZero) {
  EXPECT_LT(forchheimer_tangent_weight(Vec2::Zero(), 2.0, 3.0, 1e-10).norm(), 1e-14);
  const Mat2 w = forchheimer_tangent_weight(Vec2(3, 4), 2.0, 3.0, 1e-10);
  // F (|u| I + u u^T / |u|)
  Mat2 expect = 2.0 * (5.0 * Mat2::Identity() + Vec2(3, 4) * Vec2(3, 4).transpose() / 5.0);
  EXPECT_LT((w - expect).norm(), 1e-13);
}

TEST(Forms, LoadVectors) {
  const Mesh m = square(4);
  const FeSpace v = FeSpace::raviart_thomas(m, 1);
  const FeSpace q = FeSpace::discontinuous(m, 1);
  const auto [fu, gp] = assemble_rhs([](const Vec2& x) { return Vec2(x.y(), 1.0); },
                                     [](const Vec2& x) { return x.x() * x.y(); }, v, q);
  const Vector u = interpolate_rt([](const Vec2& x) { return Vec2(x.x(), 0.0); }, v).coeffs;
  // int x y = 1/4
  EXPECT_NEAR(fu.dot(u), 0.25, 1e-13);
  EXPECT_NEAR(gp.sum(), 0.25, 1e-13);
}

TEST(Forms, PressureBoundaryLoad) {
  const Mesh m = square(4);
  for (int k : {0, 1}) {
    const FeSpace v = FeSpace::raviart_thomas(m, k);
    const Vector load = assemble_pressure_boundary_load([](const Vec2& x) { return x.x() + x.y(); }, v);
    const Vector u = interpolate_rt([](const Vec2&) { return Vec2(1, 1); }, v).coeffs;
    // Right side: int (1 + y) dy, top side: int (x + 1) dx.
    EXPECT_NEAR(load.dot(u), 3.0, 1e-13);
    for (int d : v.constrained_dofs()) EXPECT_NEAR(load[d], 0.0, 1e-14);
  }
}

TEST(Forms, RieszOperators) {
  const Mesh m = square(3);
  const FeSpace v = FeSpace::raviart_thomas(m, 1);
  const FeSpace q = FeSpace::discontinuous(m, 1);
  const SparseMatrix mass = assemble_mass(v);
  const SparseMatrix b = assemble_b(v, q);
  const SparseMatrix mq = assemble_mass(q);
  const Vector u = random_vector(v.n_dofs(), 2);
  // div u lies in the DG space, so ||div u||^2 = (Bu)^T Mq^{-1} (Bu).
  Eigen::SimplicialLDLT<SparseMatrix> mq_inv(mq);
  const Vector bu = b * u;
  const double divdiv = bu.dot(mq_inv.solve(bu));
  const SparseMatrix inter = assemble_hdiv_riesz([](int, const Vec2&) { return Mat2(3.0 * Mat2::Identity()); },
                                                 v, RieszMode::Intersection);
  EXPECT_NEAR(u.dot(inter * u), 3 * u.dot(mass * u) + divdiv, 1e-10);
  const SparseMatrix scaled = assemble_hdiv_riesz([](int, const Vec2&) { return Mat2(3.0 * Mat2::Identity()); },
                                                  v, RieszMode::Scaled);
  EXPECT_NEAR(u.dot(scaled * u), 3 * (u.dot(mass * u) + divdiv), 1e-10);
}

TEST(Forms, PressureLaplacianQuadraticForm) {
  const Mesh m = square(2);
  const FeSpace q = FeSpace::discontinuous(m, 1);
  const SparseMatrix a = assemble_pressure_laplacian(Permeability::scalar(1.0), q);
  const Vector p = project_l2(ScalarFn([](const Vec2& x) { return x.x(); }), q).coeffs;
  // |grad p|^2 + sum over GammaP facets of (1/h_F) int p^2:
  // right side 2 * 1, top side 2 * 1/3.
  EXPECT_NEAR(p.dot(a * p), 1.0 + 2.0 + 2.0 / 3.0, 1e-12);
  EXPECT_LT(max_asymmetry(a), 1e-13);

  // Without GammaP the constants form the kernel.
  SideTags closed;
  closed.right = closed.top = BoundaryTag::GammaU;
  const Mesh mc = structured_rectangle(3, 3, Rectangle{}, closed);
  for (int k : {0, 1}) {
    const FeSpace qc = FeSpace::discontinuous(mc, k);
    const SparseMatrix ac = assemble_pressure_laplacian(Permeability::scalar(2.0), qc);
    EXPECT_LT((ac * Vector::Ones(qc.n_dofs())).norm(), 1e-12);
  }
}

TEST(Forms, SLaplacianIsSecondVariation) {
  // The linearised operator is the Hessian of
  //   J(p) = sum_K int w/s |grad p|^s + sum_F int w h_F^{1-s}/s |[[p]]|^s.
  const Mesh m = square(3);
  for (int k : {0, 1}) {
    const FeSpace q = FeSpace::discontinuous(m, k);
    const double s = 1.5, w = 0.7;
    auto energy = [&](const Vector& c) {
      FeFunction p(q, c);
      double j = 0.0;
      const auto& tr = triangle_rule(10);
      for (int cell = 0; cell < m.n_cells(); ++cell) {
        for (std::size_t i = 0; i < tr.size(); ++i) {
          j += tr.weights[i] * 2 * m.cell_area(cell) * w / s *
               std::pow(evaluate_gradient(p, cell, tr.points[i]).norm(), s);
        }
      }
      const auto& er = edge_rule(10);
      for (int f = 0; f < m.n_facets(); ++f) {
        if (m.facet_tag(f) == BoundaryTag::GammaU) continue;
        const auto& adj = m.facet_cells(f);
        for (std::size_t i = 0; i < er.size(); ++i) {
          const Vec2 x = m.facet_point(f, er.points[i]);
          double jump = evaluate_scalar(p, adj[0], m.to_reference(adj[0], x));
          if (adj[1] >= 0) jump -= evaluate_scalar(p, adj[1], m.to_reference(adj[1], x));
          j += er.weights[i] * m.facet_length(f) * w * std::pow(m.facet_length(f), 1 - s) / s *
               std::pow(std::abs(jump), s);
        }
      }
      return j;
    };
    // Distinct cell offsets keep every jump away from zero, where |[[p]]|^{s-2}
    // is singular and neither quadrature would resolve it.
    Vector c0 = 0.1 * random_vector(q.n_dofs(), 21);
    for (int cell = 0; cell < m.n_cells(); ++cell) {
      for (int d : q.cell_dofs(cell)) c0[d] += 3.0 * (cell + 1);
    }
    const Vector dir = random_vector(q.n_dofs(), 22);
    const SparseMatrix h = assemble_pressure_slaplacian_linearised(
        FeFunction(q, c0), [w](int, const Vec2&) { return w; }, 1e-12, s);
    EXPECT_LT(max_asymmetry(h), 1e-12);
    const double t = 1e-4;
    const double fd = (energy(c0 + t * dir) - 2 * energy(c0) + energy(c0 - t * dir)) / (t * t);
    EXPECT_NEAR(dir.dot(h * dir) / fd, 1.0, 1e-4) << "k=" << k;
  }
}

TEST(Forms, SaddleAssemblyAndRestriction) {
  const Mesh m = square(2);
  const FeSpace v = FeSpace::raviart_thomas(m, 0);
  const FeSpace q = FeSpace::discontinuous(m, 0);
  BlockSystem sys;
  sys.A = restrict_velocity(assemble_mass(v), v);
  sys.B = -restrict_velocity_columns(assemble_b(v, q), v);
  sys.rhs_u = Vector::Ones(sys.n_u());
  sys.rhs_p = Vector::Zero(sys.n_p());
  const SparseMatrix k = sys.saddle();
  EXPECT_EQ(k.rows(), sys.n_u() + sys.n_p());
  EXPECT_LT(max_asymmetry(k), 1e-15);
  EXPECT_EQ(sys.rhs().size(), k.rows());
  const Vector full = random_vector(v.n_dofs(), 4);
  const Vector back = extend_velocity(restrict_velocity(full, v), v);
  for (int d : v.free_dofs()) EXPECT_EQ(back[d], full[d]);
  for (int d : v.constrained_dofs()) EXPECT_EQ(back[d], 0.0);
}
