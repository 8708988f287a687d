#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dfsolve/common.hpp"
#include "dfsolve/forms.hpp"

namespace dfsolve {

enum class PrecondVariant {
  IntersectionSum,  ///< H(div) block with the full tangent weight, sum-space pressure block
  ScaledRiesz,      ///< scalar-weighted H(div) block, inverse-weighted pressure mass
  None,
};

enum class PressureMode {
  SumOfInverses,     ///< M^{-1} + A_kappa^{-1} + A_s^{-1}
  CanonicalInverse,  ///< (M + A_kappa + A_s)^{-1}
};

std::string to_string(PrecondVariant v);
std::string to_string(PressureMode m);
PrecondVariant parse_precond_variant(const std::string& s);
PressureMode parse_pressure_mode(const std::string& s);

struct PrecondSpec {
  PrecondVariant variant = PrecondVariant::IntersectionSum;
  PressureMode pressure_mode = PressureMode::SumOfInverses;
};

/// Block-diagonal SPD preconditioner diag(P_u, P_p) for a BlockSystem, built
/// around the linearisation state (u_hat, p_hat). P_u is the inverse of a
/// velocity Riesz matrix R_u on the free dofs; P_p is the pressure map. All
/// blocks are factorised once at construction; apply() is const and may be
/// called concurrently.
class BlockPreconditioner {
 public:
  /// Identity of the given size (variant None).
  static BlockPreconditioner identity(int n_u, int n_p);
  /// u_hat lives on the full RT space, p_hat on the DG space.
  static BlockPreconditioner build(const PrecondSpec& spec, const ModelParams& params,
                                   const FeFunction& u_hat, const FeFunction& p_hat);

  int n_u() const { return n_u_; }
  int n_p() const { return n_p_; }
  const PrecondSpec& spec() const { return spec_; }

  /// z = P r.
  Vector apply(const Vector& r) const;
  /// Applies the velocity block only.
  Vector apply_velocity(const Vector& r) const;
  /// Applies the pressure block only.
  Vector apply_pressure(const Vector& r) const;

  /// Velocity Riesz matrix R_u = P_u^{-1}.
  const SparseMatrix& velocity_matrix() const { return velocity_; }
  /// Pressure operators: {M, A_kappa, A_s} for IntersectionSum (A_s omitted
  /// when F = 0), the weighted mass for ScaledRiesz, identity for None.
  const std::vector<SparseMatrix>& pressure_blocks() const { return pressure_; }
  /// Dense P_p^{-1}, the metric the pressure block induces.
  DenseMatrix dense_pressure_metric() const;

 private:
  struct Factors;
  PrecondSpec spec_;
  int n_u_ = 0;
  int n_p_ = 0;
  SparseMatrix velocity_;
  std::vector<SparseMatrix> pressure_;
  std::shared_ptr<const Factors> factors_;
};

/// Sparse LU of the saddle matrix, reusable for several right-hand sides.
class SaddleFactorisation {
 public:
  explicit SaddleFactorisation(const SparseMatrix& k);
  ~SaddleFactorisation();
  SaddleFactorisation(SaddleFactorisation&&) noexcept;
  SaddleFactorisation& operator=(SaddleFactorisation&&) noexcept;

  Vector solve(const Vector& rhs) const;
  int size() const { return n_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int n_ = 0;
};

/// Direct solve of the saddle system. Applies up to three steps of iterative
/// refinement if the relative residual exceeds 1e-10. Throws SolverError when
/// the factorisation is singular.
std::pair<Vector, Vector> solve_direct(const BlockSystem& sys);
/// Same, for a matrix and right-hand side already in saddle form.
Vector solve_direct(const SparseMatrix& k, const Vector& rhs);

struct KrylovReport {
  int iterations = 0;
  /// Preconditioned residual norm relative to the preconditioned rhs norm.
  double relative_residual = 0.0;
  bool converged = false;
  bool breakdown = false;
};

/// Preconditioned MINRES for a symmetric (indefinite) matrix and an SPD
/// preconditioner given as a callable z = P r.
std::pair<Vector, KrylovReport> minres(const SparseMatrix& k, const Vector& rhs,
                                       const std::function<Vector(const Vector&)>& precond,
                                       double tol, int max_iters);
std::pair<std::pair<Vector, Vector>, KrylovReport> minres_solve(const BlockSystem& sys,
                                                                const BlockPreconditioner& p,
                                                                double tol, int max_iters);

struct ConditionOptions {
  /// Systems up to this size use a dense generalised eigensolve.
  int dense_threshold = 4000;
  bool allow_lanczos = true;
  int lanczos_max_steps = 300;
  double lanczos_tol = 1e-6;
  /// When set, all computed eigenvalues are written here (dense path) or the
  /// extremal Ritz values (Lanczos path).
  std::vector<double>* spectrum = nullptr;
};

/// |lambda|_max / |lambda|_min for the generalised problem K x = lambda R x
/// with R = diag(R_u, P_p^{-1}), i.e. the spectrum of P K.
double estimate_condition_number(const BlockSystem& sys, const BlockPreconditioner& p,
                                 const ConditionOptions& opts = {});

/// Orthonormal basis of null(B) as columns, computed from a dense QR of B^T.
DenseMatrix kernel_basis(const SparseMatrix& b);

/// One value per line.
void write_spectrum_csv(const std::vector<double>& values, const std::string& path);

}  // namespace dfsolve
