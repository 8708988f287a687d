#pragma once

#include <utility>
#include <vector>

#include "dfsolve/common.hpp"
#include "dfsolve/fespace.hpp"

namespace dfsolve {

/// Hydraulic conductivity: an SPD 2x2 tensor field (scalars promoted to k*I).
struct Permeability {
  TensorFn tensor;
  bool constant = false;

  static Permeability scalar(double k);
  static Permeability uniform_tensor(const Mat2& k);
  static Permeability isotropic(ScalarFn k);
  static Permeability field(TensorFn k);

  Mat2 operator()(const Vec2& x) const { return tensor(x); }
};

struct ModelParams {
  Permeability kappa = Permeability::scalar(1.0);
  double forchheimer = 1.0;  ///< F >= 0
  double r = 3.0;            ///< Forchheimer index, r >= 2
  /// Lower bound on |u| inside |u|^{r-4} of the Newton weight, and on
  /// |grad p|, |[[p]]| in the linearised 3/2-Laplacian.
  double epsilon_reg = 1e-10;
};

/// F ( |u|^{r-2} I + (r-2) max(|u|, eps)^{r-4} u u^T ): the pointwise weight of
/// the Gateaux derivative of F |u|^{r-2} u.
Mat2 forchheimer_tangent_weight(const Vec2& u, double forchheimer, double r, double eps);

/// Cellwise kappa^{-1} + F H(u_hat), the full anisotropic tangent weight.
CellTensorFn tangent_weight_field(const ModelParams& params, const FeFunction& u_hat);
/// Cellwise scalar lambda_max(kappa^{-1}) + F |u_hat|^{r-2}.
CellScalarFn scaled_weight_field(const ModelParams& params, const FeFunction& u_hat);
/// Cellwise [F max(|u_hat|, eps)^{r-2}]^{-1}. Requires F > 0.
CellScalarFn inverse_forchheimer_weight(const ModelParams& params, const FeFunction& u_hat);

/// a(u, v) = int kappa^{-1} u . v. Throws AssemblyError naming the cell when
/// kappa is not SPD at a quadrature point.
SparseMatrix assemble_a(const ModelParams& params, const FeSpace& velocity);

/// b_h(v, q) = int q div v, as an (n_pressure x n_velocity) matrix.
SparseMatrix assemble_b(const FeSpace& velocity, const FeSpace& pressure);

/// Entries c(u; u, phi_i) = int F |u|^{r-2} u . phi_i.
Vector assemble_c_residual(const FeFunction& u, const ModelParams& params);

/// <F H(u_m) du, v> = int F |u_m|^{r-2} du.v + F (r-2) |u_m|^{r-4} (u_m.du)(u_m.v),
/// with |u_m| bounded below by epsilon_reg in the second factor only.
SparseMatrix assemble_newton_hessian(const FeFunction& u_m, const ModelParams& params);

/// Load vectors (f, v) and (g, q).
std::pair<Vector, Vector> assemble_rhs(const VectorFn& f, const ScalarFn& g,
                                       const FeSpace& velocity, const FeSpace& pressure);

/// int_{GammaP} p_D v . n ds, the natural pressure boundary term.
Vector assemble_pressure_boundary_load(const ScalarFn& pressure_bc, const FeSpace& velocity);

enum class RieszMode {
  Intersection,  ///< (W du, v) + (div du, div v)
  Scaled,        ///< w [(du, v) + (div du, div v)], W = w I
};

/// H(div) Riesz operator with a cellwise weight. In Scaled mode the weight
/// must be isotropic; its mean eigenvalue multiplies the divergence term.
SparseMatrix assemble_hdiv_riesz(const CellTensorFn& weight, const FeSpace& velocity,
                                 RieszMode mode);

/// Interior-penalty weighted Laplacian on a DG space:
///   sum_K (kappa grad p, grad q)_K + sum_{F interior or GammaP} (1/h_F)(kappa_n [[p]], [[q]])_F
/// with h_F the facet length and kappa_n = n . kappa n. Scaled by `scale`.
SparseMatrix assemble_pressure_laplacian(const Permeability& kappa, const FeSpace& pressure,
                                         double scale = 1.0);

/// Linearisation of the discrete s-Laplacian (s = 3/2) around p_ref:
///   sum_K w |g|^{s-2} (grad p, grad q) + w (s-2) |g|^{s-4} (g . grad p)(g . grad q)
///   + sum_F w (s-1) h_F^{1-s} |[[p_ref]]|^{s-2} ([[p]], [[q]]),   g = grad p_ref,
/// where |g| and |[[p_ref]]| are bounded below by eps. On facets w is the mean
/// of the adjacent cell values.
SparseMatrix assemble_pressure_slaplacian_linearised(const FeFunction& p_ref,
                                                     const CellScalarFn& weight, double eps,
                                                     double s = 1.5);

SparseMatrix assemble_mass(const FeSpace& space);
/// DG mass matrix sum_K (w p, q)_K with a cellwise weight.
SparseMatrix assemble_weighted_mass(const CellScalarFn& weight, const FeSpace& dg_space);

/// Tangent saddle-point system on the free velocity dofs:
///   [ A  B^T ] [du]   [rhs_u]
///   [ B  0   ] [dp] = [rhs_p]
/// B = -b_h restricted to free velocity dofs, so the pressure unknown is the
/// physical pressure of  kappa^{-1} u + F|u|^{r-2} u + grad p = f.
struct BlockSystem {
  SparseMatrix A;
  SparseMatrix B;
  Vector rhs_u;
  Vector rhs_p;
  const FeSpace* velocity = nullptr;
  const FeSpace* pressure = nullptr;

  int n_u() const { return static_cast<int>(A.rows()); }
  int n_p() const { return static_cast<int>(B.rows()); }
  /// Assembled [[A, B^T], [B, 0]].
  SparseMatrix saddle() const;
  Vector rhs() const;
};

/// Restricts full-space velocity operators to the free dofs of `velocity`.
SparseMatrix restrict_velocity(const SparseMatrix& full, const FeSpace& velocity);
/// Restricts columns only (pressure x velocity coupling).
SparseMatrix restrict_velocity_columns(const SparseMatrix& full, const FeSpace& velocity);
Vector restrict_velocity(const Vector& full, const FeSpace& velocity);
Vector extend_velocity(const Vector& reduced, const FeSpace& velocity);

/// Writes a sparse matrix in MatrixMarket coordinate format.
void write_matrix_market(const SparseMatrix& a, const std::string& path);

}  // namespace dfsolve
