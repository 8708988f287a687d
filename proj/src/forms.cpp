#include "dfsolve/forms.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <string>

#include "dfsolve/quadrature.hpp"

namespace dfsolve {
namespace {

struct RtWeights {
  Mat2 mass;
  double div;
};

// Sum over cells and quadrature points of  phi_j . M phi_i + d div phi_i div phi_j.
template <class WeightAt>
SparseMatrix assemble_rt_operator(const FeSpace& v, int degree, WeightAt&& weight_at) {
  const Mesh& mesh = v.mesh();
  const int nl = v.local_dim();
  const auto& tr = triangle_rule(degree);
  std::vector<Triplet> trip;
  trip.reserve(static_cast<std::size_t>(mesh.n_cells()) * nl * nl);
  std::array<Vec2, 8> val;
  std::array<double, 8> div;
  DenseMatrix local(nl, nl);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    local.setZero();
    const double det = 2.0 * mesh.cell_area(c);
    for (std::size_t q = 0; q < tr.size(); ++q) {
      const Vec2& ref = tr.points[q];
      v.shape_vector(c, ref, val, div);
      const RtWeights w = weight_at(c, ref);
      const double jw = tr.weights[q] * det;
      for (int i = 0; i < nl; ++i) {
        const Vec2 wi = w.mass * val[i];
        for (int j = 0; j < nl; ++j) local(i, j) += jw * (wi.dot(val[j]) + w.div * div[i] * div[j]);
      }
    }
    const auto dofs = v.cell_dofs(c);
    for (int i = 0; i < nl; ++i) {
      for (int j = 0; j < nl; ++j) trip.emplace_back(dofs[i], dofs[j], local(i, j));
    }
  }
  SparseMatrix out(v.n_dofs(), v.n_dofs());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

// Cell part sum_K (G grad p, grad q) + m p q for a DG space.
template <class WeightAt>
void add_dg_cell_terms(const FeSpace& q, int degree, WeightAt&& weight_at,
                       std::vector<Triplet>& trip) {
  const Mesh& mesh = q.mesh();
  const int nl = q.local_dim();
  const auto& tr = triangle_rule(degree);
  std::array<double, 3> phi;
  std::array<Vec2, 3> grad;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double det = 2.0 * mesh.cell_area(c);
    const auto dofs = q.cell_dofs(c);
    for (std::size_t p = 0; p < tr.size(); ++p) {
      q.shape_scalar(c, tr.points[p], phi, grad);
      const auto [g, m] = weight_at(c, tr.points[p]);
      const double jw = tr.weights[p] * det;
      for (int i = 0; i < nl; ++i) {
        const Vec2 gi = g * grad[i];
        for (int j = 0; j < nl; ++j) {
          trip.emplace_back(dofs[i], dofs[j], jw * (gi.dot(grad[j]) + m * phi[i] * phi[j]));
        }
      }
    }
  }
}

// Facet part sum_{F interior or GammaP} (w [[p]], [[q]])_F.
template <class WeightAt>
void add_dg_facet_terms(const FeSpace& q, int degree, WeightAt&& weight_at,
                        std::vector<Triplet>& trip) {
  const Mesh& mesh = q.mesh();
  const int nl = q.local_dim();
  const auto& er = edge_rule(degree);
  std::array<double, 3> phi;
  std::vector<int> dofs;
  std::vector<double> jump;
  for (int f = 0; f < mesh.n_facets(); ++f) {
    if (mesh.facet_tag(f) == BoundaryTag::GammaU) continue;
    const auto& adj = mesh.facet_cells(f);
    const int sides = adj[1] < 0 ? 1 : 2;
    dofs.clear();
    for (int s = 0; s < sides; ++s) {
      const auto d = q.cell_dofs(adj[s]);
      dofs.insert(dofs.end(), d.begin(), d.end());
    }
    jump.assign(dofs.size(), 0.0);
    const double len = mesh.facet_length(f);
    for (std::size_t p = 0; p < er.size(); ++p) {
      const Vec2 x = mesh.facet_point(f, er.points[p]);
      for (int s = 0; s < sides; ++s) {
        q.shape_scalar(adj[s], mesh.to_reference(adj[s], x), phi, {});
        for (int i = 0; i < nl; ++i) jump[s * nl + i] = (s == 0 ? 1.0 : -1.0) * phi[i];
      }
      const double w = weight_at(f, x) * er.weights[p] * len;
      for (std::size_t i = 0; i < dofs.size(); ++i) {
        for (std::size_t j = 0; j < dofs.size(); ++j) {
          trip.emplace_back(dofs[i], dofs[j], w * jump[i] * jump[j]);
        }
      }
    }
  }
}

SparseMatrix from_triplets(int n, const std::vector<Triplet>& trip) {
  SparseMatrix out(n, n);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

Mat2 checked_inverse(const Mat2& k, int cell) {
  Eigen::LLT<Mat2> llt(k);
  if ((k - k.transpose()).cwiseAbs().maxCoeff() > 1e-12 * k.cwiseAbs().maxCoeff() ||
      llt.info() != Eigen::Success || !(k.determinant() > 0.0)) {
    throw AssemblyError("permeability is not symmetric positive definite in cell " +
                        std::to_string(cell));
  }
  return k.inverse();
}

int velocity_degree_for(const FeSpace& v, bool variable) {
  return 2 * v.degree() + (variable ? 4 : 2);
}

}  // namespace

double max_asymmetry(const SparseMatrix& a) {
  const SparseMatrix d = a - SparseMatrix(a.transpose());
  double m = 0.0;
  for (int k = 0; k < d.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(d, k); it; ++it) m = std::max(m, std::abs(it.value()));
  }
  return m;
}

Permeability Permeability::scalar(double k) {
  return {[k](const Vec2&) -> Mat2 { return k * Mat2::Identity(); }, true};
}

Permeability Permeability::uniform_tensor(const Mat2& k) {
  return {[k](const Vec2&) { return k; }, true};
}

Permeability Permeability::isotropic(ScalarFn k) {
  return {[k = std::move(k)](const Vec2& x) -> Mat2 { return k(x) * Mat2::Identity(); }, false};
}

Permeability Permeability::field(TensorFn k) { return {std::move(k), false}; }

Mat2 forchheimer_tangent_weight(const Vec2& u, double forchheimer, double r, double eps) {
  const double norm = u.norm();
  const double reg = std::max(norm, eps);
  Mat2 w = std::pow(norm, r - 2.0) * Mat2::Identity();
  w += (r - 2.0) * std::pow(reg, r - 4.0) * (u * u.transpose());
  return forchheimer * w;
}

CellTensorFn tangent_weight_field(const ModelParams& params, const FeFunction& u_hat) {
  return [params, &u_hat](int c, const Vec2& ref) -> Mat2 {
    const Mesh& mesh = u_hat.space->mesh();
    const Mat2 kinv = params.kappa(mesh.to_physical(c, ref)).inverse();
    return kinv + forchheimer_tangent_weight(evaluate_vector(u_hat, c, ref), params.forchheimer,
                                             params.r, params.epsilon_reg);
  };
}

CellScalarFn scaled_weight_field(const ModelParams& params, const FeFunction& u_hat) {
  return [params, &u_hat](int c, const Vec2& ref) {
    const Mesh& mesh = u_hat.space->mesh();
    const Mat2 k = params.kappa(mesh.to_physical(c, ref));
    const double kmin = Eigen::SelfAdjointEigenSolver<Mat2>(k, Eigen::EigenvaluesOnly)
                            .eigenvalues()
                            .minCoeff();
    const double un = evaluate_vector(u_hat, c, ref).norm();
    return 1.0 / kmin + params.forchheimer * std::pow(un, params.r - 2.0);
  };
}

CellScalarFn inverse_forchheimer_weight(const ModelParams& params, const FeFunction& u_hat) {
  if (!(params.forchheimer > 0.0)) {
    throw std::invalid_argument("inverse Forchheimer weight needs F > 0");
  }
  return [params, &u_hat](int c, const Vec2& ref) {
    const double un = std::max(evaluate_vector(u_hat, c, ref).norm(), params.epsilon_reg);
    return 1.0 / (params.forchheimer * std::pow(un, params.r - 2.0));
  };
}

SparseMatrix assemble_a(const ModelParams& params, const FeSpace& velocity) {
  const Mesh& mesh = velocity.mesh();
  const bool variable = !params.kappa.constant;
  Mat2 kinv_const = Mat2::Identity();
  if (!variable) kinv_const = checked_inverse(params.kappa(Vec2::Zero()), 0);
  return assemble_rt_operator(
      velocity, velocity_degree_for(velocity, variable), [&](int c, const Vec2& ref) {
        if (!variable) return RtWeights{kinv_const, 0.0};
        return RtWeights{checked_inverse(params.kappa(mesh.to_physical(c, ref)), c), 0.0};
      });
}

SparseMatrix assemble_b(const FeSpace& velocity, const FeSpace& pressure) {
  const Mesh& mesh = velocity.mesh();
  const int nu = velocity.local_dim(), np = pressure.local_dim();
  const auto& tr = triangle_rule(std::max(1, 2 * velocity.degree()));
  std::vector<Triplet> trip;
  std::array<Vec2, 8> val;
  std::array<double, 8> div;
  std::array<double, 3> phi;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double det = 2.0 * mesh.cell_area(c);
    const auto ud = velocity.cell_dofs(c);
    const auto pd = pressure.cell_dofs(c);
    for (std::size_t q = 0; q < tr.size(); ++q) {
      velocity.shape_vector(c, tr.points[q], val, div);
      pressure.shape_scalar(c, tr.points[q], phi, {});
      const double jw = tr.weights[q] * det;
      for (int i = 0; i < np; ++i) {
        for (int j = 0; j < nu; ++j) trip.emplace_back(pd[i], ud[j], jw * phi[i] * div[j]);
      }
    }
  }
  SparseMatrix out(pressure.n_dofs(), velocity.n_dofs());
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

Vector assemble_c_residual(const FeFunction& u, const ModelParams& params) {
  const FeSpace& v = *u.space;
  const Mesh& mesh = v.mesh();
  const int nl = v.local_dim();
  Vector out = Vector::Zero(v.n_dofs());
  if (params.forchheimer == 0.0) return out;
  const auto& tr = triangle_rule(2 * v.degree() + 4);
  std::array<Vec2, 8> val;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double det = 2.0 * mesh.cell_area(c);
    const auto dofs = v.cell_dofs(c);
    for (std::size_t q = 0; q < tr.size(); ++q) {
      v.shape_vector(c, tr.points[q], val, {});
      Vec2 uq = Vec2::Zero();
      for (int i = 0; i < nl; ++i) uq += u.coeffs[dofs[i]] * val[i];
      const Vec2 flux = params.forchheimer * std::pow(uq.norm(), params.r - 2.0) * uq;
      const double jw = tr.weights[q] * det;
      for (int i = 0; i < nl; ++i) out[dofs[i]] += jw * flux.dot(val[i]);
    }
  }
  return out;
}

SparseMatrix assemble_newton_hessian(const FeFunction& u_m, const ModelParams& params) {
  const FeSpace& v = *u_m.space;
  return assemble_rt_operator(v, 2 * v.degree() + 4, [&](int c, const Vec2& ref) {
    return RtWeights{forchheimer_tangent_weight(evaluate_vector(u_m, c, ref), params.forchheimer,
                                                params.r, params.epsilon_reg),
                     0.0};
  });
}

std::pair<Vector, Vector> assemble_rhs(const VectorFn& f, const ScalarFn& g,
                                       const FeSpace& velocity, const FeSpace& pressure) {
  const Mesh& mesh = velocity.mesh();
  Vector fu = Vector::Zero(velocity.n_dofs());
  Vector gp = Vector::Zero(pressure.n_dofs());
  const auto& tr = triangle_rule(2 * velocity.degree() + 4);
  std::array<Vec2, 8> val;
  std::array<double, 3> phi;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const double det = 2.0 * mesh.cell_area(c);
    const auto ud = velocity.cell_dofs(c);
    const auto pd = pressure.cell_dofs(c);
    for (std::size_t q = 0; q < tr.size(); ++q) {
      const Vec2 x = mesh.to_physical(c, tr.points[q]);
      velocity.shape_vector(c, tr.points[q], val, {});
      pressure.shape_scalar(c, tr.points[q], phi, {});
      const double jw = tr.weights[q] * det;
      const Vec2 fx = f(x);
      const double gx = g(x);
      for (int i = 0; i < velocity.local_dim(); ++i) fu[ud[i]] += jw * fx.dot(val[i]);
      for (int i = 0; i < pressure.local_dim(); ++i) gp[pd[i]] += jw * gx * phi[i];
    }
  }
  return {std::move(fu), std::move(gp)};
}

Vector assemble_pressure_boundary_load(const ScalarFn& pressure_bc, const FeSpace& velocity) {
  const Mesh& mesh = velocity.mesh();
  Vector out = Vector::Zero(velocity.n_dofs());
  const auto& er = edge_rule(2 * velocity.degree() + 4);
  std::array<Vec2, 8> val;
  for (int f = 0; f < mesh.n_facets(); ++f) {
    if (mesh.facet_tag(f) != BoundaryTag::GammaP) continue;
    const int c = mesh.facet_cells(f)[0];
    int local = 0;
    while (mesh.cell_facets(c)[local] != f) ++local;
    const Vec2 n_out = mesh.facet_sign(c, local) * mesh.facet_normal(f);
    const double len = mesh.facet_length(f);
    const auto dofs = velocity.cell_dofs(c);
    for (std::size_t q = 0; q < er.size(); ++q) {
      const Vec2 x = mesh.facet_point(f, er.points[q]);
      velocity.shape_vector(c, mesh.to_reference(c, x), val, {});
      const double w = pressure_bc(x) * er.weights[q] * len;
      for (int i = 0; i < velocity.local_dim(); ++i) out[dofs[i]] += w * val[i].dot(n_out);
    }
  }
  return out;
}

SparseMatrix assemble_hdiv_riesz(const CellTensorFn& weight, const FeSpace& velocity,
                                 RieszMode mode) {
  return assemble_rt_operator(velocity, 2 * velocity.degree() + 4, [&](int c, const Vec2& ref) {
    const Mat2 w = weight(c, ref);
    if (mode == RieszMode::Intersection) return RtWeights{w, 1.0};
    return RtWeights{w, 0.5 * w.trace()};
  });
}

SparseMatrix assemble_pressure_laplacian(const Permeability& kappa, const FeSpace& pressure,
                                         double scale) {
  const Mesh& mesh = pressure.mesh();
  const int deg = 2 * pressure.degree() + (kappa.constant ? 2 : 4);
  std::vector<Triplet> trip;
  if (pressure.degree() > 0) {
    add_dg_cell_terms(
        pressure, deg,
        [&](int c, const Vec2& ref) {
          return std::pair<Mat2, double>{scale * kappa(mesh.to_physical(c, ref)), 0.0};
        },
        trip);
  }
  add_dg_facet_terms(
      pressure, deg,
      [&](int f, const Vec2& x) {
        const Vec2 n = mesh.facet_normal(f);
        return scale * n.dot(kappa(x) * n) / mesh.facet_length(f);
      },
      trip);
  return from_triplets(pressure.n_dofs(), trip);
}

SparseMatrix assemble_pressure_slaplacian_linearised(const FeFunction& p_ref,
                                                     const CellScalarFn& weight, double eps,
                                                     double s) {
  const FeSpace& q = *p_ref.space;
  const Mesh& mesh = q.mesh();
  const int deg = 2 * q.degree() + 4;
  std::vector<Triplet> trip;
  if (q.degree() > 0) {
    add_dg_cell_terms(
        q, deg,
        [&](int c, const Vec2& ref) {
          const Vec2 g = evaluate_gradient(p_ref, c, ref);
          const double gn = std::max(g.norm(), eps);
          const double w = weight(c, ref);
          Mat2 t = std::pow(gn, s - 2.0) * Mat2::Identity() +
                   (s - 2.0) * std::pow(gn, s - 4.0) * (g * g.transpose());
          return std::pair<Mat2, double>{w * t, 0.0};
        },
        trip);
  }
  add_dg_facet_terms(
      q, deg,
      [&](int f, const Vec2& x) {
        const auto& adj = mesh.facet_cells(f);
        const Vec2 r0 = mesh.to_reference(adj[0], x);
        double jump = evaluate_scalar(p_ref, adj[0], r0);
        double w = weight(adj[0], r0);
        if (adj[1] >= 0) {
          const Vec2 r1 = mesh.to_reference(adj[1], x);
          jump -= evaluate_scalar(p_ref, adj[1], r1);
          w = 0.5 * (w + weight(adj[1], r1));
        }
        const double jn = std::max(std::abs(jump), eps);
        return w * (s - 1.0) * std::pow(mesh.facet_length(f), 1.0 - s) * std::pow(jn, s - 2.0);
      },
      trip);
  return from_triplets(q.n_dofs(), trip);
}

SparseMatrix assemble_mass(const FeSpace& space) {
  if (space.is_rt()) {
    return assemble_rt_operator(space, 2 * space.degree() + 2, [](int, const Vec2&) {
      return RtWeights{Mat2::Identity(), 0.0};
    });
  }
  std::vector<Triplet> trip;
  add_dg_cell_terms(
      space, std::max(1, 2 * space.degree()),
      [](int, const Vec2&) { return std::pair<Mat2, double>{Mat2::Zero(), 1.0}; }, trip);
  return from_triplets(space.n_dofs(), trip);
}

SparseMatrix assemble_weighted_mass(const CellScalarFn& weight, const FeSpace& dg_space) {
  if (dg_space.is_rt()) throw std::invalid_argument("weighted mass expects a DG space");
  std::vector<Triplet> trip;
  add_dg_cell_terms(
      dg_space, 2 * dg_space.degree() + 4,
      [&](int c, const Vec2& ref) { return std::pair<Mat2, double>{Mat2::Zero(), weight(c, ref)}; },
      trip);
  return from_triplets(dg_space.n_dofs(), trip);
}

SparseMatrix BlockSystem::saddle() const {
  const int nu = n_u(), np = n_p();
  std::vector<Triplet> trip;
  trip.reserve(A.nonZeros() + 2 * B.nonZeros());
  for (int k = 0; k < A.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(A, k); it; ++it) trip.emplace_back(it.row(), it.col(), it.value());
  }
  for (int k = 0; k < B.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(B, k); it; ++it) {
      trip.emplace_back(nu + it.row(), it.col(), it.value());
      trip.emplace_back(it.col(), nu + it.row(), it.value());
    }
  }
  SparseMatrix out(nu + np, nu + np);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

Vector BlockSystem::rhs() const {
  Vector out(n_u() + n_p());
  out << rhs_u, rhs_p;
  return out;
}

namespace {

std::vector<int> reduced_index(const FeSpace& velocity) {
  std::vector<int> idx(velocity.n_dofs(), -1);
  const auto& free = velocity.free_dofs();
  for (std::size_t i = 0; i < free.size(); ++i) idx[free[i]] = static_cast<int>(i);
  return idx;
}

}  // namespace

SparseMatrix restrict_velocity(const SparseMatrix& full, const FeSpace& velocity) {
  const auto idx = reduced_index(velocity);
  const int nf = static_cast<int>(velocity.free_dofs().size());
  std::vector<Triplet> trip;
  trip.reserve(full.nonZeros());
  for (int k = 0; k < full.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(full, k); it; ++it) {
      const int r = idx[it.row()], c = idx[it.col()];
      if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
    }
  }
  SparseMatrix out(nf, nf);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

SparseMatrix restrict_velocity_columns(const SparseMatrix& full, const FeSpace& velocity) {
  const auto idx = reduced_index(velocity);
  const int nf = static_cast<int>(velocity.free_dofs().size());
  std::vector<Triplet> trip;
  trip.reserve(full.nonZeros());
  for (int k = 0; k < full.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(full, k); it; ++it) {
      const int c = idx[it.col()];
      if (c >= 0) trip.emplace_back(it.row(), c, it.value());
    }
  }
  SparseMatrix out(full.rows(), nf);
  out.setFromTriplets(trip.begin(), trip.end());
  return out;
}

Vector restrict_velocity(const Vector& full, const FeSpace& velocity) {
  const auto& free = velocity.free_dofs();
  Vector out(free.size());
  for (std::size_t i = 0; i < free.size(); ++i) out[i] = full[free[i]];
  return out;
}

Vector extend_velocity(const Vector& reduced, const FeSpace& velocity) {
  const auto& free = velocity.free_dofs();
  Vector out = Vector::Zero(velocity.n_dofs());
  for (std::size_t i = 0; i < free.size(); ++i) out[free[i]] = reduced[i];
  return out;
}

void write_matrix_market(const SparseMatrix& a, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.rows() << ' ' << a.cols() << ' ' << a.nonZeros() << '\n';
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (int k = 0; k < a.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) {
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << it.value() << '\n';
    }
  }
}

}  // namespace dfsolve
