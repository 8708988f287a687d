#include "dfsolve/norms.hpp"

#include <cmath>

#include "dfsolve/linsolve.hpp"
#include "dfsolve/quadrature.hpp"

namespace dfsolve {

VectorField field_of(const FeFunction& u) {
  return {&u.space->mesh(), as_cell_field(u), div_as_cell_field(u)};
}

ScalarField scalar_field_of(const FeFunction& p) {
  return {&p.space->mesh(), scalar_as_cell_field(p)};
}

VectorField error_field(const FeFunction& u_h, const VectorFn& u, const ScalarFn& div_u) {
  const Mesh* mesh = &u_h.space->mesh();
  return {mesh,
          [&u_h, u, mesh](int c, const Vec2& ref) -> Vec2 {
            return evaluate_vector(u_h, c, ref) - u(mesh->to_physical(c, ref));
          },
          [&u_h, div_u, mesh](int c, const Vec2& ref) {
            return evaluate_div(u_h, c, ref) - div_u(mesh->to_physical(c, ref));
          }};
}

ScalarField error_field(const FeFunction& p_h, const ScalarFn& p) {
  const Mesh* mesh = &p_h.space->mesh();
  return {mesh, [&p_h, p, mesh](int c, const Vec2& ref) {
            return evaluate_scalar(p_h, c, ref) - p(mesh->to_physical(c, ref));
          }};
}

VectorField transfer(const FeFunction& coarse, const Mesh& fine, std::vector<int> ancestor) {
  auto anc = std::make_shared<const std::vector<int>>(std::move(ancestor));
  const Mesh* cm = &coarse.space->mesh();
  const Mesh* fm = &fine;
  return {fm,
          [&coarse, anc, cm, fm](int c, const Vec2& ref) -> Vec2 {
            const int a = (*anc)[c];
            return evaluate_vector(coarse, a, cm->to_reference(a, fm->to_physical(c, ref)));
          },
          [&coarse, anc, cm, fm](int c, const Vec2& ref) {
            const int a = (*anc)[c];
            return evaluate_div(coarse, a, cm->to_reference(a, fm->to_physical(c, ref)));
          }};
}

ScalarField transfer_scalar(const FeFunction& coarse, const Mesh& fine, std::vector<int> ancestor) {
  auto anc = std::make_shared<const std::vector<int>>(std::move(ancestor));
  const Mesh* cm = &coarse.space->mesh();
  const Mesh* fm = &fine;
  return {fm, [&coarse, anc, cm, fm](int c, const Vec2& ref) {
            const int a = (*anc)[c];
            return evaluate_scalar(coarse, a, cm->to_reference(a, fm->to_physical(c, ref)));
          }};
}

std::vector<int> ancestor_map(const std::vector<Mesh>& hierarchy, int coarse, int fine) {
  if (coarse < 0 || fine >= static_cast<int>(hierarchy.size()) || coarse > fine) {
    throw std::invalid_argument("invalid hierarchy levels");
  }
  std::vector<int> anc(hierarchy[fine].n_cells());
  for (int c = 0; c < hierarchy[fine].n_cells(); ++c) {
    int a = c;
    for (int l = fine; l > coarse; --l) a = hierarchy[l].parent_cells()[a];
    anc[c] = a;
  }
  return anc;
}

FeFunction prolongate_dg(const FeFunction& coarse, const FeSpace& fine,
                         const std::vector<int>& ancestor) {
  if (coarse.space->is_rt() || fine.is_rt() || coarse.space->degree() != fine.degree()) {
    throw std::invalid_argument("prolongation expects DG spaces of equal degree");
  }
  const Mesh& fm = fine.mesh();
  const Mesh& cm = coarse.space->mesh();
  FeFunction out(fine);
  // DG_0: one value per cell. DG_1: nodal values at the reference vertices.
  static const Vec2 nodes[3] = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1)};
  static const Vec2 centroid(1.0 / 3.0, 1.0 / 3.0);
  for (int c = 0; c < fm.n_cells(); ++c) {
    const auto dofs = fine.cell_dofs(c);
    const int a = ancestor[c];
    for (std::size_t i = 0; i < dofs.size(); ++i) {
      const Vec2 ref = fine.degree() == 0 ? centroid : nodes[i];
      out.coeffs[dofs[i]] = evaluate_scalar(coarse, a, cm.to_reference(a, fm.to_physical(c, ref)));
    }
  }
  return out;
}

FeFunction restrict_dg(const FeFunction& fine, const FeSpace& coarse, const std::vector<int>& ancestor) {
  if (coarse.is_rt() || fine.space->is_rt() || coarse.degree() != fine.space->degree()) {
    throw std::invalid_argument("restriction expects DG spaces of equal degree");
  }
  const Mesh& fm = fine.space->mesh();
  const Mesh& cm = coarse.mesh();
  if (static_cast<int>(ancestor.size()) != fm.n_cells()) throw std::invalid_argument("ancestor map size mismatch");
  const int n = coarse.local_dim();
  std::vector<DenseMatrix> mass(cm.n_cells(), DenseMatrix::Zero(n, n));
  std::vector<Vector> rhs(cm.n_cells(), Vector::Zero(n));
  const auto& tr = triangle_rule(2 * coarse.degree() + 1);
  std::vector<double> phi(n), phi_f(fine.space->local_dim());
  std::vector<Vec2> grad(n), grad_f(fine.space->local_dim());
  for (int c = 0; c < fm.n_cells(); ++c) {
    const int a = ancestor[c];
    const double det = 2.0 * fm.cell_area(c);
    const auto fdofs = fine.space->cell_dofs(c);
    for (std::size_t q = 0; q < tr.size(); ++q) {
      const Vec2 x = fm.to_physical(c, tr.points[q]);
      coarse.shape_scalar(a, cm.to_reference(a, x), phi, grad);
      fine.space->shape_scalar(c, tr.points[q], phi_f, grad_f);
      double value = 0.0;
      for (std::size_t i = 0; i < fdofs.size(); ++i) value += fine.coeffs[fdofs[i]] * phi_f[i];
      const double w = tr.weights[q] * det;
      for (int i = 0; i < n; ++i) {
        rhs[a][i] += w * value * phi[i];
        for (int j = 0; j < n; ++j) mass[a](i, j) += w * phi[i] * phi[j];
      }
    }
  }
  FeFunction out(coarse);
  for (int a = 0; a < cm.n_cells(); ++a) {
    const Vector local = mass[a].llt().solve(rhs[a]);
    const auto dofs = coarse.cell_dofs(a);
    for (int i = 0; i < n; ++i) out.coeffs[dofs[i]] = local[i];
  }
  return out;
}

namespace {

template <class Integrand>
double integrate(const Mesh& mesh, Integrand&& f) {
  const auto& tr = triangle_rule(kNormQuadratureDegree);
  double s = 0.0;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double det = 2.0 * mesh.cell_area(c);
    for (std::size_t q = 0; q < tr.size(); ++q) s += tr.weights[q] * det * f(c, tr.points[q]);
  }
  return s;
}

}  // namespace

double norm_l3(const VectorField& v) {
  return std::cbrt(integrate(*v.mesh, [&](int c, const Vec2& r) {
    return std::pow(v.value(c, r).norm(), 3);
  }));
}

double norm_l2(const ScalarField& q) {
  return std::sqrt(integrate(*q.mesh, [&](int c, const Vec2& r) {
    const double x = q.value(c, r);
    return x * x;
  }));
}

namespace {

double div_l2(const VectorField& v) {
  return std::sqrt(integrate(*v.mesh, [&](int c, const Vec2& r) {
    const double d = v.div(c, r);
    return d * d;
  }));
}

}  // namespace

double norm_V(const VectorField& v, const ModelParams& params) {
  const Mesh& mesh = *v.mesh;
  const double weighted = std::sqrt(integrate(mesh, [&](int c, const Vec2& r) {
    const Vec2 val = v.value(c, r);
    return val.dot(params.kappa(mesh.to_physical(c, r)).llt().solve(val));
  }));
  double out = weighted + div_l2(v);
  if (params.forchheimer > 0.0) out += std::cbrt(params.forchheimer) * norm_l3(v);
  return out;
}

double norm_h3div(const VectorField& v) {
  const double l3 = norm_l3(v), d = div_l2(v);
  return std::sqrt(l3 * l3 + d * d);
}

double norm_h3div_power_sum(const VectorField& v) {
  const double l3 = norm_l3(v), d = div_l2(v);
  return std::sqrt(l3 * l3 * l3 + d * d);
}

double sum_space_norm(const Vector& q, const std::vector<SparseMatrix>& operators) {
  const int n = static_cast<int>(q.size());
  const int m = static_cast<int>(operators.size());
  if (m == 0) throw std::invalid_argument("sum-space norm needs at least one operator");
  if (q.isZero(0.0)) return 0.0;
  std::vector<Triplet> trip;
  for (int i = 0; i < m; ++i) {
    const SparseMatrix& a = operators[i];
    if (a.rows() != n || a.cols() != n) throw std::invalid_argument("operator size mismatch");
    for (int k = 0; k < a.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
        trip.emplace_back(i * n + it.row(), i * n + it.col(), it.value());
      }
    }
    for (int j = 0; j < n; ++j) {
      trip.emplace_back(i * n + j, m * n + j, -1.0);
      trip.emplace_back(m * n + j, i * n + j, -1.0);
    }
  }
  SparseMatrix kkt((m + 1) * n, (m + 1) * n);
  kkt.setFromTriplets(trip.begin(), trip.end());
  Vector rhs = Vector::Zero((m + 1) * n);
  rhs.tail(n) = -q;
  const Vector x = solve_direct(kkt, rhs);
  const double sq = q.dot(x.tail(n));
  return std::sqrt(std::max(sq, 0.0));
}

std::vector<SparseMatrix> qhat_operators(const FeFunction& p_ref, const ModelParams& params) {
  const FeSpace& q = *p_ref.space;
  std::vector<SparseMatrix> ops{assemble_mass(q), assemble_pressure_laplacian(params.kappa, q)};
  if (params.forchheimer > 0.0) {
    const double w = 1.0 / params.forchheimer;
    ops.push_back(assemble_pressure_slaplacian_linearised(
        p_ref, [w](int, const Vec2&) { return w; }, params.epsilon_reg));
  }
  return ops;
}

double norm_Qhat(const FeFunction& q, const std::vector<SparseMatrix>& operators) {
  return sum_space_norm(q.coeffs, operators);
}

std::vector<std::optional<double>> convergence_rates(const std::vector<double>& h,
                                                     const std::vector<double>& errors) {
  if (h.size() != errors.size()) throw std::invalid_argument("h and errors differ in length");
  std::vector<std::optional<double>> out(h.size());
  for (std::size_t i = 1; i < h.size(); ++i) {
    if (!(h[i] < h[i - 1])) throw std::invalid_argument("mesh sizes must decrease strictly");
    if (errors[i] > 0.0 && errors[i - 1] > 0.0) {
      out[i] = std::log(errors[i] / errors[i - 1]) / std::log(h[i] / h[i - 1]);
    }
  }
  return out;
}

}  // namespace dfsolve
