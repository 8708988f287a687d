#pragma once

#include <span>
#include <vector>

#include "dfsolve/common.hpp"
#include "dfsolve/mesh.hpp"

namespace dfsolve {

enum class SpaceKind { RaviartThomas, DiscontinuousLagrange };

/// Raviart-Thomas RT_k or discontinuous P_k space on a triangle mesh, k in {0, 1}.
///
/// RT degrees of freedom are facet normal moments
///   l_{f,m}(v) = int_f v . n_f q_m ds,  q_0 = 1, q_1 = 2t - 1,
/// with n_f and the facet parameter t following the global facet orientation,
/// plus for k = 1 two interior moments (1/h_K) int_K v . e_j dx. Basis
/// functions are Piola images of a reference spanning set, made dual to these
/// functionals cell by cell, so normal traces agree across shared facets.
/// DG_1 uses the vertex-nodal basis of each cell.
///
/// The space keeps a pointer to its mesh; the mesh must outlive it.
class FeSpace {
 public:
  static FeSpace raviart_thomas(const Mesh& mesh, int degree);
  static FeSpace discontinuous(const Mesh& mesh, int degree);

  SpaceKind kind() const { return kind_; }
  bool is_rt() const { return kind_ == SpaceKind::RaviartThomas; }
  int degree() const { return degree_; }
  const Mesh& mesh() const { return *mesh_; }
  int n_dofs() const { return n_dofs_; }
  int local_dim() const { return local_dim_; }

  std::span<const int> cell_dofs(int c) const {
    return {dofs_.data() + static_cast<std::size_t>(c) * local_dim_,
            static_cast<std::size_t>(local_dim_)};
  }
  /// RT only: the k + 1 moment dofs living on facet f.
  std::vector<int> facet_dofs(int f) const;

  /// RT facet dofs on GammaU facets, where u . n is prescribed.
  const std::vector<int>& constrained_dofs() const { return constrained_; }
  const std::vector<int>& free_dofs() const { return free_; }
  bool is_constrained(int dof) const { return constrained_mask_[dof] != 0; }

  /// Piola-mapped RT shape functions and their divergences at a reference point.
  void shape_vector(int c, const Vec2& ref, std::span<Vec2> values,
                    std::span<double> divergence) const;
  /// DG shape functions and physical gradients at a reference point.
  void shape_scalar(int c, const Vec2& ref, std::span<double> values,
                    std::span<Vec2> gradients) const;

 private:
  FeSpace(const Mesh& mesh, SpaceKind kind, int degree);
  void build_rt();

  const Mesh* mesh_;
  SpaceKind kind_;
  int degree_;
  int local_dim_ = 0;
  int n_dofs_ = 0;
  std::vector<int> dofs_;
  std::vector<int> constrained_;
  std::vector<int> free_;
  std::vector<char> constrained_mask_;
  // Per cell: coefficients of the dual basis in the Piola-mapped spanning set.
  std::vector<DenseMatrix> rt_coefficients_;
};

/// A coefficient vector over an FeSpace (u_h, p_h, Newton increments, ...).
struct FeFunction {
  const FeSpace* space = nullptr;
  Vector coeffs;

  FeFunction() = default;
  explicit FeFunction(const FeSpace& s) : space(&s), coeffs(Vector::Zero(s.n_dofs())) {}
  FeFunction(const FeSpace& s, Vector c);
};

Vec2 evaluate_vector(const FeFunction& f, int cell, const Vec2& ref);
/// Throws std::invalid_argument for a DG function.
double evaluate_div(const FeFunction& f, int cell, const Vec2& ref);
double evaluate_scalar(const FeFunction& f, int cell, const Vec2& ref);
Vec2 evaluate_gradient(const FeFunction& f, int cell, const Vec2& ref);

/// Cellwise views of discrete functions, for norms and weights.
CellVectorFn as_cell_field(const FeFunction& u);
CellScalarFn div_as_cell_field(const FeFunction& u);
CellScalarFn scalar_as_cell_field(const FeFunction& p);

/// Fortin interpolant: reproduces all RT moments of v.
FeFunction interpolate_rt(const VectorFn& v, const FeSpace& space);
/// Same, for a field given cellwise on the space's mesh. Facet moments are
/// taken from the first adjacent cell, which is exact when v has continuous
/// normal traces.
FeFunction interpolate_rt(const CellVectorFn& v, const FeSpace& space);

/// Moments of `flux` on the constrained (GammaU) dofs; zero elsewhere.
Vector essential_values(const VectorFn& flux, const FeSpace& space);

/// Orthogonal L2 projection onto a DG space, solved cell by cell.
FeFunction project_l2(const ScalarFn& q, const FeSpace& space);
FeFunction project_l2(const CellScalarFn& q, const FeSpace& space);

/// Discrete gradient: (grad_h q, v) = -(div v, q) for all v with v . n = 0 on
/// GammaU. Realised by a global RT mass solve; constrained coefficients are 0.
FeFunction discrete_gradient(const FeFunction& q, const FeSpace& rt_space);

}  // namespace dfsolve
