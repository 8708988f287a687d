#pragma once

#include <optional>
#include <vector>

#include "dfsolve/common.hpp"
#include "dfsolve/fespace.hpp"
#include "dfsolve/forms.hpp"

namespace dfsolve {

/// A vector field and its divergence, given cellwise on `mesh`. Fields built
/// from FeFunctions refer to them; the functions must outlive the field.
struct VectorField {
  const Mesh* mesh = nullptr;
  CellVectorFn value;
  CellScalarFn div;
};

/// A scalar field given cellwise on `mesh`.
struct ScalarField {
  const Mesh* mesh = nullptr;
  CellScalarFn value;
};

VectorField field_of(const FeFunction& u);
ScalarField scalar_field_of(const FeFunction& p);
/// u_h - u on the mesh of u_h.
VectorField error_field(const FeFunction& u_h, const VectorFn& u, const ScalarFn& div_u);
ScalarField error_field(const FeFunction& p_h, const ScalarFn& p);

/// Evaluates a function living on a coarse mesh at points of a finer mesh of
/// the same refinement hierarchy. `ancestor[c]` is the coarse cell containing
/// fine cell c.
VectorField transfer(const FeFunction& coarse, const Mesh& fine, std::vector<int> ancestor);
ScalarField transfer_scalar(const FeFunction& coarse, const Mesh& fine, std::vector<int> ancestor);
/// Ancestor map between two meshes of a hierarchy: `hierarchy[i + 1]` must
/// be refine_uniform(hierarchy[i]).
std::vector<int> ancestor_map(const std::vector<Mesh>& hierarchy, int coarse, int fine);
/// Exact representation of a coarse DG function in the DG space of a finer
/// mesh of the hierarchy (DG spaces are nested).
FeFunction prolongate_dg(const FeFunction& coarse, const FeSpace& fine, const std::vector<int>& ancestor);
/// L2 projection of a fine DG function onto the DG space of a coarser mesh of
/// the hierarchy, integrated exactly over the fine cells.
FeFunction restrict_dg(const FeFunction& fine, const FeSpace& coarse, const std::vector<int>& ancestor);

/// Quadrature degree used by the norm integrals.
inline constexpr int kNormQuadratureDegree = 8;

/// (int kappa^{-1} |v|^2)^{1/2} + ||div v||_0 + F^{1/3} ||v||_{0,3}.
double norm_V(const VectorField& v, const ModelParams& params);
/// (||v||_{0,3}^2 + ||div v||_0^2)^{1/2}, homogeneous of degree one.
double norm_h3div(const VectorField& v);
/// (||v||_{0,3}^3 + ||div v||_0^2)^{1/2}, the power-sum form.
double norm_h3div_power_sum(const VectorField& v);
double norm_l2(const ScalarField& q);
double norm_l3(const VectorField& v);

/// Sum-space norm of a discrete q over SPD or PSD operators A_i:
///   min { sum_i q_i^T A_i q_i : sum_i q_i = q },
/// computed from the stationarity system A_i q_i = lambda, sum q_i = q,
/// whose value is q^T lambda. Returns the square root. Throws SolverError
/// when the system is singular (no summand covers q).
double sum_space_norm(const Vector& q, const std::vector<SparseMatrix>& operators);

/// Operators of the broken weighted pressure norm on a DG space: mass,
/// kappa-weighted interior-penalty Laplacian, and the 3/2-Laplacian
/// linearised around p_ref with weight 1/F (omitted when F = 0).
std::vector<SparseMatrix> qhat_operators(const FeFunction& p_ref, const ModelParams& params);
double norm_Qhat(const FeFunction& q, const std::vector<SparseMatrix>& operators);

struct LevelErrors {
  double h = 0.0;
  int n_dofs = 0;
  double err_u_h3div = 0.0;
  double err_p_l2 = 0.0;
  std::optional<double> err_u_V;
  std::optional<double> err_p_Qhat;
  double div_residual_inf = 0.0;
  int newton_iters = 0;
  bool newton_converged = false;
};

struct ErrorReport {
  std::vector<LevelErrors> levels;
};

/// rate_i = log(e_i / e_{i-1}) / log(h_i / h_{i-1}); entry 0 is empty.
/// Throws std::invalid_argument unless h is strictly decreasing.
std::vector<std::optional<double>> convergence_rates(const std::vector<double>& h,
                                                     const std::vector<double>& errors);

}  // namespace dfsolve
