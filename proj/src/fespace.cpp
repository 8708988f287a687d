#include "dfsolve/fespace.hpp"

#include <array>
#include <cmath>
#include <string>

#include <Eigen/SparseCholesky>

#include "dfsolve/quadrature.hpp"

namespace dfsolve {
namespace {

constexpr int kInterpolationDegree = 10;

int rt_local_dim(int k) { return k == 0 ? 3 : 8; }
int dg_local_dim(int k) { return k == 0 ? 1 : 3; }

// Reference spanning set of RT_k: [P_k]^2 + x * homogeneous P_k.
void reference_rt(int k, const Vec2& p, std::span<Vec2> val, std::span<double> div) {
  const double x = p.x(), y = p.y();
  if (k == 0) {
    val[0] = {1.0, 0.0};
    val[1] = {0.0, 1.0};
    val[2] = {x, y};
    div[0] = 0.0;
    div[1] = 0.0;
    div[2] = 2.0;
    return;
  }
  val[0] = {1.0, 0.0};
  val[1] = {x, 0.0};
  val[2] = {y, 0.0};
  val[3] = {0.0, 1.0};
  val[4] = {0.0, x};
  val[5] = {0.0, y};
  val[6] = {x * x, x * y};
  val[7] = {x * y, y * y};
  div[0] = 0.0;
  div[1] = 1.0;
  div[2] = 0.0;
  div[3] = 0.0;
  div[4] = 0.0;
  div[5] = 1.0;
  div[6] = 3.0 * x;
  div[7] = 3.0 * y;
}

double edge_weight(int m, double t) { return m == 0 ? 1.0 : 2.0 * t - 1.0; }

void check_cell(const FeSpace& space, int cell) {
  if (cell < 0 || cell >= space.mesh().n_cells()) {
    throw std::invalid_argument("cell index " + std::to_string(cell) + " out of range");
  }
}

void require_rt(const FeSpace& space, const char* what) {
  if (!space.is_rt()) throw std::invalid_argument(std::string(what) + " needs an RT space");
}

void require_dg(const FeSpace& space, const char* what) {
  if (space.is_rt()) throw std::invalid_argument(std::string(what) + " needs a DG space");
}

template <class CellField>
FeFunction interpolate_rt_impl(const CellField& v, const FeSpace& space) {
  require_rt(space, "interpolate_rt");
  const Mesh& mesh = space.mesh();
  const int k = space.degree();
  FeFunction out(space);
  const auto& er = edge_rule(kInterpolationDegree);
  for (int f = 0; f < mesh.n_facets(); ++f) {
    const int c = mesh.facet_cells(f)[0];
    const Vec2 n = mesh.facet_normal(f);
    const double len = mesh.facet_length(f);
    const auto dofs = space.facet_dofs(f);
    for (std::size_t q = 0; q < er.size(); ++q) {
      const double t = er.points[q];
      const Vec2 ref = mesh.to_reference(c, mesh.facet_point(f, t));
      const double vn = v(c, ref).dot(n) * er.weights[q] * len;
      for (int m = 0; m <= k; ++m) out.coeffs[dofs[m]] += vn * edge_weight(m, t);
    }
  }
  if (k == 1) {
    const auto& tr = triangle_rule(kInterpolationDegree);
    for (int c = 0; c < mesh.n_cells(); ++c) {
      const auto dofs = space.cell_dofs(c);
      const double scale = 2.0 * mesh.cell_area(c) / mesh.cell_diameter(c);
      Vec2 moment = Vec2::Zero();
      for (std::size_t q = 0; q < tr.size(); ++q) moment += tr.weights[q] * v(c, tr.points[q]);
      out.coeffs[dofs[6]] = scale * moment.x();
      out.coeffs[dofs[7]] = scale * moment.y();
    }
  }
  return out;
}

template <class CellField>
FeFunction project_l2_impl(const CellField& q, const FeSpace& space) {
  require_dg(space, "project_l2");
  const Mesh& mesh = space.mesh();
  const int nl = space.local_dim();
  const auto& tr = triangle_rule(kInterpolationDegree);
  FeFunction out(space);
  std::array<double, 3> phi{};
  std::array<Vec2, 3> grad{};
  for (int c = 0; c < mesh.n_cells(); ++c) {
    DenseMatrix mass = DenseMatrix::Zero(nl, nl);
    Vector rhs = Vector::Zero(nl);
    const double det = 2.0 * mesh.cell_area(c);
    for (std::size_t p = 0; p < tr.size(); ++p) {
      space.shape_scalar(c, tr.points[p], phi, grad);
      const double w = tr.weights[p] * det;
      const double value = q(c, tr.points[p]);
      for (int i = 0; i < nl; ++i) {
        rhs[i] += w * value * phi[i];
        for (int j = 0; j < nl; ++j) mass(i, j) += w * phi[i] * phi[j];
      }
    }
    const Vector local = mass.llt().solve(rhs);
    const auto dofs = space.cell_dofs(c);
    for (int i = 0; i < nl; ++i) out.coeffs[dofs[i]] = local[i];
  }
  return out;
}

}  // namespace

FeSpace::FeSpace(const Mesh& mesh, SpaceKind kind, int degree)
    : mesh_(&mesh), kind_(kind), degree_(degree) {
  if (degree != 0 && degree != 1) {
    throw std::invalid_argument("only degrees 0 and 1 are supported");
  }
}

FeSpace FeSpace::discontinuous(const Mesh& mesh, int degree) {
  FeSpace s(mesh, SpaceKind::DiscontinuousLagrange, degree);
  s.local_dim_ = dg_local_dim(degree);
  s.n_dofs_ = mesh.n_cells() * s.local_dim_;
  s.dofs_.resize(s.n_dofs_);
  for (int i = 0; i < s.n_dofs_; ++i) s.dofs_[i] = i;
  s.constrained_mask_.assign(s.n_dofs_, 0);
  s.free_ = s.dofs_;
  return s;
}

FeSpace FeSpace::raviart_thomas(const Mesh& mesh, int degree) {
  FeSpace s(mesh, SpaceKind::RaviartThomas, degree);
  s.build_rt();
  return s;
}

std::vector<int> FeSpace::facet_dofs(int f) const {
  std::vector<int> out(degree_ + 1);
  for (int m = 0; m <= degree_; ++m) out[m] = f * (degree_ + 1) + m;
  return out;
}

void FeSpace::build_rt() {
  const Mesh& mesh = *mesh_;
  const int k = degree_;
  const int per_facet = k + 1;
  local_dim_ = rt_local_dim(k);
  n_dofs_ = mesh.n_facets() * per_facet + (k == 1 ? 2 * mesh.n_cells() : 0);
  dofs_.resize(static_cast<std::size_t>(mesh.n_cells()) * local_dim_);
  for (int c = 0; c < mesh.n_cells(); ++c) {
    int* d = dofs_.data() + static_cast<std::size_t>(c) * local_dim_;
    for (int i = 0; i < 3; ++i) {
      for (int m = 0; m < per_facet; ++m) d[i * per_facet + m] = mesh.cell_facets(c)[i] * per_facet + m;
    }
    if (k == 1) {
      d[6] = mesh.n_facets() * per_facet + 2 * c;
      d[7] = mesh.n_facets() * per_facet + 2 * c + 1;
    }
  }

  constrained_mask_.assign(n_dofs_, 0);
  for (int f = 0; f < mesh.n_facets(); ++f) {
    if (mesh.facet_tag(f) == BoundaryTag::GammaU) {
      for (int d : facet_dofs(f)) constrained_mask_[d] = 1;
    }
  }
  for (int d = 0; d < n_dofs_; ++d) (constrained_mask_[d] ? constrained_ : free_).push_back(d);

  // Dual basis per cell: V(i, j) = l_i(psi_j), coefficients = V^{-1}.
  const int nl = local_dim_;
  const auto& er = edge_rule(2 * k + 2);
  const auto& tr = triangle_rule(2 * k + 2);
  std::vector<Vec2> ref_val(nl);
  std::vector<double> ref_div(nl);
  rt_coefficients_.resize(mesh.n_cells());
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const Mat2 jac = mesh.jacobian(c);
    const double det = jac.determinant();
    DenseMatrix v = DenseMatrix::Zero(nl, nl);
    for (int i = 0; i < 3; ++i) {
      const int f = mesh.cell_facets(c)[i];
      const Vec2 n = mesh.facet_normal(f);
      const double len = mesh.facet_length(f);
      for (std::size_t q = 0; q < er.size(); ++q) {
        const double t = er.points[q];
        reference_rt(k, mesh.to_reference(c, mesh.facet_point(f, t)), ref_val, ref_div);
        for (int j = 0; j < nl; ++j) {
          const double flux = (jac * ref_val[j]).dot(n) / det * er.weights[q] * len;
          for (int m = 0; m < per_facet; ++m) v(i * per_facet + m, j) += flux * edge_weight(m, t);
        }
      }
    }
    if (k == 1) {
      const double scale = 2.0 * mesh.cell_area(c) / mesh.cell_diameter(c);
      for (std::size_t q = 0; q < tr.size(); ++q) {
        reference_rt(k, tr.points[q], ref_val, ref_div);
        for (int j = 0; j < nl; ++j) {
          const Vec2 psi = jac * ref_val[j] / det;
          v(6, j) += scale * tr.weights[q] * psi.x();
          v(7, j) += scale * tr.weights[q] * psi.y();
        }
      }
    }
    rt_coefficients_[c] = v.inverse();
  }
}

void FeSpace::shape_vector(int c, const Vec2& ref, std::span<Vec2> values,
                           std::span<double> divergence) const {
  const int nl = local_dim_;
  std::array<Vec2, 8> rv;
  std::array<double, 8> rd;
  reference_rt(degree_, ref, rv, rd);
  const Mat2 jac = mesh_->jacobian(c);
  const double det = jac.determinant();
  const DenseMatrix& coef = rt_coefficients_[c];
  for (int i = 0; i < nl; ++i) {
    Vec2 vhat = Vec2::Zero();
    double dhat = 0.0;
    for (int j = 0; j < nl; ++j) {
      vhat += coef(j, i) * rv[j];
      dhat += coef(j, i) * rd[j];
    }
    values[i] = jac * vhat / det;
    if (!divergence.empty()) divergence[i] = dhat / det;
  }
}

void FeSpace::shape_scalar(int c, const Vec2& ref, std::span<double> values,
                           std::span<Vec2> gradients) const {
  if (degree_ == 0) {
    values[0] = 1.0;
    if (!gradients.empty()) gradients[0] = Vec2::Zero();
    return;
  }
  values[0] = 1.0 - ref.x() - ref.y();
  values[1] = ref.x();
  values[2] = ref.y();
  if (!gradients.empty()) {
    const Mat2 jinv_t = mesh_->jacobian(c).inverse().transpose();
    gradients[0] = jinv_t * Vec2(-1.0, -1.0);
    gradients[1] = jinv_t * Vec2(1.0, 0.0);
    gradients[2] = jinv_t * Vec2(0.0, 1.0);
  }
}

FeFunction::FeFunction(const FeSpace& s, Vector c) : space(&s), coeffs(std::move(c)) {
  if (coeffs.size() != s.n_dofs()) {
    throw std::invalid_argument("coefficient vector length does not match the space");
  }
}

Vec2 evaluate_vector(const FeFunction& f, int cell, const Vec2& ref) {
  const FeSpace& s = *f.space;
  require_rt(s, "evaluate_vector");
  check_cell(s, cell);
  std::array<Vec2, 8> val;
  s.shape_vector(cell, ref, val, {});
  Vec2 out = Vec2::Zero();
  const auto dofs = s.cell_dofs(cell);
  for (std::size_t i = 0; i < dofs.size(); ++i) out += f.coeffs[dofs[i]] * val[i];
  return out;
}

double evaluate_div(const FeFunction& f, int cell, const Vec2& ref) {
  const FeSpace& s = *f.space;
  require_rt(s, "evaluate_div");
  check_cell(s, cell);
  std::array<Vec2, 8> val;
  std::array<double, 8> div;
  s.shape_vector(cell, ref, val, div);
  double out = 0.0;
  const auto dofs = s.cell_dofs(cell);
  for (std::size_t i = 0; i < dofs.size(); ++i) out += f.coeffs[dofs[i]] * div[i];
  return out;
}

double evaluate_scalar(const FeFunction& f, int cell, const Vec2& ref) {
  const FeSpace& s = *f.space;
  require_dg(s, "evaluate_scalar");
  check_cell(s, cell);
  std::array<double, 3> val;
  s.shape_scalar(cell, ref, val, {});
  double out = 0.0;
  const auto dofs = s.cell_dofs(cell);
  for (std::size_t i = 0; i < dofs.size(); ++i) out += f.coeffs[dofs[i]] * val[i];
  return out;
}

Vec2 evaluate_gradient(const FeFunction& f, int cell, const Vec2& ref) {
  const FeSpace& s = *f.space;
  require_dg(s, "evaluate_gradient");
  check_cell(s, cell);
  std::array<double, 3> val;
  std::array<Vec2, 3> grad;
  s.shape_scalar(cell, ref, val, grad);
  Vec2 out = Vec2::Zero();
  const auto dofs = s.cell_dofs(cell);
  for (std::size_t i = 0; i < dofs.size(); ++i) out += f.coeffs[dofs[i]] * grad[i];
  return out;
}

CellVectorFn as_cell_field(const FeFunction& u) {
  return [&u](int c, const Vec2& ref) { return evaluate_vector(u, c, ref); };
}

CellScalarFn div_as_cell_field(const FeFunction& u) {
  return [&u](int c, const Vec2& ref) { return evaluate_div(u, c, ref); };
}

CellScalarFn scalar_as_cell_field(const FeFunction& p) {
  return [&p](int c, const Vec2& ref) { return evaluate_scalar(p, c, ref); };
}

FeFunction interpolate_rt(const VectorFn& v, const FeSpace& space) {
  const Mesh& mesh = space.mesh();
  return interpolate_rt_impl(
      [&](int c, const Vec2& ref) { return v(mesh.to_physical(c, ref)); }, space);
}

FeFunction interpolate_rt(const CellVectorFn& v, const FeSpace& space) {
  return interpolate_rt_impl(v, space);
}

Vector essential_values(const VectorFn& flux, const FeSpace& space) {
  require_rt(space, "essential_values");
  const Mesh& mesh = space.mesh();
  Vector out = Vector::Zero(space.n_dofs());
  const auto& er = edge_rule(kInterpolationDegree);
  for (int f = 0; f < mesh.n_facets(); ++f) {
    if (mesh.facet_tag(f) != BoundaryTag::GammaU) continue;
    const Vec2 n = mesh.facet_normal(f);
    const double len = mesh.facet_length(f);
    const auto dofs = space.facet_dofs(f);
    for (std::size_t q = 0; q < er.size(); ++q) {
      const double t = er.points[q];
      const double vn = flux(mesh.facet_point(f, t)).dot(n) * er.weights[q] * len;
      for (int m = 0; m <= space.degree(); ++m) out[dofs[m]] += vn * edge_weight(m, t);
    }
  }
  return out;
}

FeFunction project_l2(const ScalarFn& q, const FeSpace& space) {
  const Mesh& mesh = space.mesh();
  return project_l2_impl([&](int c, const Vec2& ref) { return q(mesh.to_physical(c, ref)); },
                         space);
}

FeFunction project_l2(const CellScalarFn& q, const FeSpace& space) {
  return project_l2_impl(q, space);
}

FeFunction discrete_gradient(const FeFunction& q, const FeSpace& rt_space) {
  require_rt(rt_space, "discrete_gradient");
  const FeSpace& dg = *q.space;
  require_dg(dg, "discrete_gradient");
  if (&dg.mesh() != &rt_space.mesh()) {
    throw std::invalid_argument("discrete_gradient needs spaces on the same mesh");
  }
  const Mesh& mesh = rt_space.mesh();
  const int nu = rt_space.local_dim(), np = dg.local_dim();
  const auto& tr = triangle_rule(2 * rt_space.degree() + 2);
  std::vector<Triplet> mass;
  Vector rhs = Vector::Zero(rt_space.n_dofs());
  std::array<Vec2, 8> val;
  std::array<double, 8> div;
  std::array<double, 3> phi;
  for (int c = 0; c < mesh.n_cells(); ++c) {
    const auto udofs = rt_space.cell_dofs(c);
    const auto pdofs = dg.cell_dofs(c);
    const double det = 2.0 * mesh.cell_area(c);
    for (std::size_t p = 0; p < tr.size(); ++p) {
      rt_space.shape_vector(c, tr.points[p], val, div);
      dg.shape_scalar(c, tr.points[p], phi, {});
      const double w = tr.weights[p] * det;
      double qval = 0.0;
      for (int j = 0; j < np; ++j) qval += q.coeffs[pdofs[j]] * phi[j];
      for (int i = 0; i < nu; ++i) {
        rhs[udofs[i]] -= w * div[i] * qval;
        for (int j = 0; j < nu; ++j) mass.emplace_back(udofs[i], udofs[j], w * val[i].dot(val[j]));
      }
    }
  }
  SparseMatrix m(rt_space.n_dofs(), rt_space.n_dofs());
  m.setFromTriplets(mass.begin(), mass.end());

  const auto& free = rt_space.free_dofs();
  const int nf = static_cast<int>(free.size());
  std::vector<int> reduced(rt_space.n_dofs(), -1);
  for (int i = 0; i < nf; ++i) reduced[free[i]] = i;
  std::vector<Triplet> ff;
  for (int col = 0; col < m.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(m, col); it; ++it) {
      const int r = reduced[it.row()], cc = reduced[it.col()];
      if (r >= 0 && cc >= 0) ff.emplace_back(r, cc, it.value());
    }
  }
  SparseMatrix mff(nf, nf);
  mff.setFromTriplets(ff.begin(), ff.end());
  Vector rhs_f(nf);
  for (int i = 0; i < nf; ++i) rhs_f[i] = rhs[free[i]];

  Eigen::SimplicialLDLT<SparseMatrix> solver(mff);
  if (solver.info() != Eigen::Success) throw SolverError("RT mass matrix factorisation failed");
  const Vector g = solver.solve(rhs_f);
  FeFunction out(rt_space);
  for (int i = 0; i < nf; ++i) out.coeffs[free[i]] = g[i];
  return out;
}

}  // namespace dfsolve
