#include "dfsolve/linsolve.hpp"

#include <Eigen/UmfPackSupport>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>

namespace dfsolve {

std::string to_string(PrecondVariant v) {
  switch (v) {
    case PrecondVariant::IntersectionSum: return "intersection";
    case PrecondVariant::ScaledRiesz: return "scaled";
    case PrecondVariant::None: return "none";
  }
  return "none";
}

std::string to_string(PressureMode m) {
  return m == PressureMode::SumOfInverses ? "sum_of_inverses" : "canonical_inverse";
}

PrecondVariant parse_precond_variant(const std::string& s) {
  if (s == "intersection") return PrecondVariant::IntersectionSum;
  if (s == "scaled") return PrecondVariant::ScaledRiesz;
  if (s == "none") return PrecondVariant::None;
  throw std::invalid_argument("unknown preconditioner variant '" + s + "'");
}

PressureMode parse_pressure_mode(const std::string& s) {
  if (s == "sum_of_inverses") return PressureMode::SumOfInverses;
  if (s == "canonical_inverse") return PressureMode::CanonicalInverse;
  throw std::invalid_argument("unknown pressure mode '" + s + "'");
}

namespace {

using Cholesky = Eigen::SimplicialLLT<SparseMatrix>;

std::unique_ptr<Cholesky> factorise_spd(const SparseMatrix& a, const char* what) {
  auto f = std::make_unique<Cholesky>(a);
  if (f->info() != Eigen::Success) {
    throw SolverError(std::string("Cholesky factorisation of ") + what + " failed");
  }
  return f;
}

SparseMatrix sparse_identity(int n) {
  SparseMatrix i(n, n);
  i.setIdentity();
  return i;
}

bool has_gamma_p(const Mesh& mesh) {
  for (int f = 0; f < mesh.n_facets(); ++f) {
    if (mesh.facet_tag(f) == BoundaryTag::GammaP) return true;
  }
  return false;
}

}  // namespace

struct BlockPreconditioner::Factors {
  std::unique_ptr<Cholesky> velocity;
  std::vector<std::unique_ptr<Cholesky>> pressure;
  // Inverse of the summed pressure operators, used to precondition the
  // inner CG that applies the sum-of-inverses metric.
  std::unique_ptr<Cholesky> pressure_sum;
};

BlockPreconditioner BlockPreconditioner::identity(int n_u, int n_p) {
  BlockPreconditioner p;
  p.spec_.variant = PrecondVariant::None;
  p.n_u_ = n_u;
  p.n_p_ = n_p;
  p.velocity_ = sparse_identity(n_u);
  p.pressure_ = {sparse_identity(n_p)};
  return p;
}

BlockPreconditioner BlockPreconditioner::build(const PrecondSpec& spec, const ModelParams& params,
                                               const FeFunction& u_hat, const FeFunction& p_hat) {
  const FeSpace& v = *u_hat.space;
  const FeSpace& q = *p_hat.space;
  const int n_u = static_cast<int>(v.free_dofs().size());
  if (spec.variant == PrecondVariant::None) return identity(n_u, q.n_dofs());
  if (!has_gamma_p(v.mesh())) {
    throw std::invalid_argument("preconditioner requires a nonempty pressure boundary");
  }

  BlockPreconditioner p;
  p.spec_ = spec;
  p.n_u_ = n_u;
  p.n_p_ = q.n_dofs();
  auto factors = std::make_shared<Factors>();

  if (spec.variant == PrecondVariant::IntersectionSum) {
    p.velocity_ = restrict_velocity(
        assemble_hdiv_riesz(tangent_weight_field(params, u_hat), v, RieszMode::Intersection), v);
    p.pressure_.push_back(assemble_mass(q));
    p.pressure_.push_back(assemble_pressure_laplacian(params.kappa, q));
    if (params.forchheimer > 0.0) {
      p.pressure_.push_back(assemble_pressure_slaplacian_linearised(
          p_hat, inverse_forchheimer_weight(params, u_hat), params.epsilon_reg));
    }
  } else {
    const CellScalarFn w = scaled_weight_field(params, u_hat);
    p.velocity_ = restrict_velocity(
        assemble_hdiv_riesz([&w](int c, const Vec2& ref) -> Mat2 { return w(c, ref) * Mat2::Identity(); },
                            v, RieszMode::Scaled),
        v);
    p.pressure_.push_back(
        assemble_weighted_mass([&w](int c, const Vec2& ref) { return 1.0 / w(c, ref); }, q));
  }

  factors->velocity = factorise_spd(p.velocity_, "velocity Riesz block");
  const bool sum_of_inverses = spec.variant == PrecondVariant::IntersectionSum &&
                               spec.pressure_mode == PressureMode::SumOfInverses;
  if (sum_of_inverses) {
    for (const auto& blk : p.pressure_) factors->pressure.push_back(factorise_spd(blk, "pressure block"));
  }
  SparseMatrix sum = p.pressure_[0];
  for (std::size_t i = 1; i < p.pressure_.size(); ++i) sum += p.pressure_[i];
  factors->pressure_sum = factorise_spd(sum, "pressure block");
  p.factors_ = std::move(factors);
  return p;
}

Vector BlockPreconditioner::apply_velocity(const Vector& r) const {
  if (spec_.variant == PrecondVariant::None) return r;
  if (!factors_) throw std::logic_error("preconditioner blocks are not factorised");
  return factors_->velocity->solve(r);
}

Vector BlockPreconditioner::apply_pressure(const Vector& r) const {
  if (spec_.variant == PrecondVariant::None) return r;
  if (!factors_) throw std::logic_error("preconditioner blocks are not factorised");
  if (factors_->pressure.empty()) return factors_->pressure_sum->solve(r);
  Vector z = Vector::Zero(r.size());
  for (const auto& f : factors_->pressure) z += f->solve(r);
  return z;
}

Vector BlockPreconditioner::apply(const Vector& r) const {
  if (r.size() != n_u_ + n_p_) throw std::invalid_argument("preconditioner size mismatch");
  Vector z(r.size());
  z.head(n_u_) = apply_velocity(r.head(n_u_));
  z.tail(n_p_) = apply_pressure(r.tail(n_p_));
  return z;
}

DenseMatrix BlockPreconditioner::dense_pressure_metric() const {
  if (spec_.variant == PrecondVariant::None) return DenseMatrix::Identity(n_p_, n_p_);
  if (factors_->pressure.empty()) {
    DenseMatrix sum = DenseMatrix(pressure_[0]);
    for (std::size_t i = 1; i < pressure_.size(); ++i) sum += DenseMatrix(pressure_[i]);
    return sum;
  }
  DenseMatrix s = DenseMatrix::Zero(n_p_, n_p_);
  const DenseMatrix eye = DenseMatrix::Identity(n_p_, n_p_);
  for (const auto& f : factors_->pressure) s += f->solve(eye);
  s = 0.5 * (s + s.transpose()).eval();
  Eigen::LLT<DenseMatrix> llt(s);
  if (llt.info() != Eigen::Success) throw SolverError("pressure metric is not positive definite");
  return llt.solve(eye);
}

namespace {

// R x with R = diag(R_u, P_p^{-1}). The sum-of-inverses metric is applied by
// CG on P_p, preconditioned by the inverse of the summed blocks.
Vector apply_metric(const BlockPreconditioner& p, const SparseMatrix& pressure_sum,
                    const std::function<Vector(const Vector&)>& sum_inverse, const Vector& x) {
  Vector y(x.size());
  const int nu = p.n_u(), np = p.n_p();
  y.head(nu) = p.velocity_matrix() * x.head(nu);
  if (p.spec().variant != PrecondVariant::IntersectionSum ||
      p.spec().pressure_mode == PressureMode::CanonicalInverse) {
    y.tail(np) = pressure_sum * x.tail(np);
    return y;
  }
  const Vector b = x.tail(np);
  Vector sol = sum_inverse(b);
  Vector r = b - p.apply_pressure(sol);
  Vector z = sum_inverse(r);
  Vector d = z;
  double rz = r.dot(z);
  const double stop = 1e-14 * std::sqrt(std::abs(b.dot(sum_inverse(b))));
  for (int it = 0; it < 500 && std::sqrt(std::abs(rz)) > stop; ++it) {
    const Vector ad = p.apply_pressure(d);
    const double alpha = rz / d.dot(ad);
    sol += alpha * d;
    r -= alpha * ad;
    z = sum_inverse(r);
    const double rz_new = r.dot(z);
    d = z + (rz_new / rz) * d;
    rz = rz_new;
  }
  y.tail(np) = sol;
  return y;
}

// Largest |theta| of Y X by Lanczos in the Y-inner product, with full
// reorthogonalisation. X symmetric, Y SPD.
double lanczos_max_abs(int n, const std::function<Vector(const Vector&)>& x_op,
                       const std::function<Vector(const Vector&)>& y_op, int max_steps, double tol,
                       std::vector<double>* ritz) {
  std::mt19937 rng(20240607);
  std::normal_distribution<double> g;
  Vector v(n);
  for (int i = 0; i < n; ++i) v[i] = g(rng);
  Vector z = y_op(v);
  double beta = std::sqrt(v.dot(z));
  std::vector<Vector> vs, zs;
  std::vector<double> alphas, betas;
  double prev = 0.0, estimate = 0.0;
  const int steps = std::min(max_steps, n);
  for (int j = 0; j < steps; ++j) {
    v /= beta;
    z /= beta;
    vs.push_back(v);
    zs.push_back(z);
    Vector w = x_op(z);
    const double alpha = z.dot(w);
    alphas.push_back(alpha);
    w -= alpha * vs[j];
    if (j > 0) w -= betas.back() * vs[j - 1];
    for (int pass = 0; pass < 2; ++pass) {
      for (int i = 0; i <= j; ++i) w -= zs[i].dot(w) * vs[i];
    }
    Vector zn = y_op(w);
    const double b2 = w.dot(zn);
    const int m = j + 1;
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
    for (int i = 0; i < m; ++i) t(i, i) = alphas[i];
    for (int i = 0; i + 1 < m; ++i) t(i, i + 1) = t(i + 1, i) = betas[i];
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t, Eigen::EigenvaluesOnly);
    estimate = es.eigenvalues().cwiseAbs().maxCoeff();
    if (ritz != nullptr) {
      ritz->push_back(es.eigenvalues().minCoeff());
      ritz->push_back(es.eigenvalues().maxCoeff());
    }
    const bool invariant = !(b2 > 1e-28 * std::abs(alpha) * std::abs(alpha));
    if (invariant || (j > 4 && std::abs(estimate - prev) <= tol * estimate)) break;
    prev = estimate;
    if (ritz != nullptr) ritz->resize(ritz->size() - 2);
    beta = std::sqrt(b2);
    betas.push_back(beta);
    v = w;
    z = zn;
  }
  return estimate;
}

}  // namespace

struct SaddleFactorisation::Impl {
  SparseMatrix matrix;
  Eigen::UmfPackLU<SparseMatrix> lu;
};

SaddleFactorisation::SaddleFactorisation(const SparseMatrix& k)
    : impl_(std::make_unique<Impl>()), n_(static_cast<int>(k.rows())) {
  impl_->matrix = k;
  impl_->matrix.makeCompressed();
  impl_->lu.compute(impl_->matrix);
  if (impl_->lu.info() != Eigen::Success) throw SolverError("saddle-point factorisation is singular");
}

SaddleFactorisation::~SaddleFactorisation() = default;
SaddleFactorisation::SaddleFactorisation(SaddleFactorisation&&) noexcept = default;
SaddleFactorisation& SaddleFactorisation::operator=(SaddleFactorisation&&) noexcept = default;

Vector SaddleFactorisation::solve(const Vector& rhs) const {
  Vector x = impl_->lu.solve(rhs);
  const double bn = std::max(rhs.norm(), std::numeric_limits<double>::min());
  for (int step = 0; step < 3; ++step) {
    const Vector r = rhs - impl_->matrix * x;
    if (r.norm() <= 1e-12 * bn) break;
    x += impl_->lu.solve(r);
  }
  if (!x.allFinite()) throw SolverError("saddle-point solve produced non-finite values");
  return x;
}

Vector solve_direct(const SparseMatrix& k, const Vector& rhs) {
  return SaddleFactorisation(k).solve(rhs);
}

std::pair<Vector, Vector> solve_direct(const BlockSystem& sys) {
  const Vector x = solve_direct(sys.saddle(), sys.rhs());
  return {x.head(sys.n_u()), x.tail(sys.n_p())};
}

std::pair<Vector, KrylovReport> minres(const SparseMatrix& k, const Vector& rhs,
                                       const std::function<Vector(const Vector&)>& precond,
                                       double tol, int max_iters) {
  const int n = static_cast<int>(rhs.size());
  KrylovReport rep;
  Vector x = Vector::Zero(n);
  Vector r1 = rhs, r2 = rhs;
  Vector y = precond(r1);
  const double b1sq = r1.dot(y);
  if (b1sq < 0.0) {
    rep.breakdown = true;
    return {x, rep};
  }
  const double beta1 = std::sqrt(b1sq);
  if (beta1 == 0.0) {
    rep.converged = true;
    return {x, rep};
  }
  double beta = beta1, oldb = 0.0, dbar = 0.0, epsln = 0.0, phibar = beta1;
  double cs = -1.0, sn = 0.0;
  Vector w = Vector::Zero(n), w1(n), w2 = Vector::Zero(n);
  for (int it = 1; it <= max_iters; ++it) {
    const Vector v = y / beta;
    y = k * v;
    if (it >= 2) y -= (beta / oldb) * r1;
    const double alpha = v.dot(y);
    y -= (alpha / beta) * r2;
    r1 = r2;
    r2 = y;
    y = precond(r2);
    oldb = beta;
    const double bsq = r2.dot(y);
    if (bsq < 0.0 || !std::isfinite(bsq)) {
      rep.breakdown = true;
      rep.iterations = it;
      break;
    }
    beta = std::sqrt(bsq);
    const double oldeps = epsln;
    const double delta = cs * dbar + sn * alpha;
    const double gbar = sn * dbar - cs * alpha;
    epsln = sn * beta;
    dbar = -cs * beta;
    const double gamma = std::max(std::hypot(gbar, beta), std::numeric_limits<double>::min());
    cs = gbar / gamma;
    sn = beta / gamma;
    const double phi = cs * phibar;
    phibar = sn * phibar;
    w1 = w2;
    w2 = w;
    w = (v - oldeps * w1 - delta * w2) / gamma;
    x += phi * w;
    rep.iterations = it;
    rep.relative_residual = phibar / beta1;
    if (rep.relative_residual <= tol) {
      rep.converged = true;
      break;
    }
    if (beta == 0.0) break;
  }
  return {x, rep};
}

std::pair<std::pair<Vector, Vector>, KrylovReport> minres_solve(const BlockSystem& sys,
                                                                const BlockPreconditioner& p,
                                                                double tol, int max_iters) {
  if (p.n_u() != sys.n_u() || p.n_p() != sys.n_p()) {
    throw std::invalid_argument("preconditioner does not match the system");
  }
  auto [x, rep] = minres(sys.saddle(), sys.rhs(), [&p](const Vector& r) { return p.apply(r); },
                         tol, max_iters);
  return {{x.head(sys.n_u()), x.tail(sys.n_p())}, rep};
}

double estimate_condition_number(const BlockSystem& sys, const BlockPreconditioner& p,
                                 const ConditionOptions& opts) {
  const int nu = sys.n_u(), np = sys.n_p(), n = nu + np;
  if (p.n_u() != nu || p.n_p() != np) throw std::invalid_argument("preconditioner does not match the system");
  const SparseMatrix k = sys.saddle();

  if (n <= opts.dense_threshold) {
    DenseMatrix kd(k);
    kd = 0.5 * (kd + kd.transpose()).eval();
    DenseMatrix r = DenseMatrix::Zero(n, n);
    r.topLeftCorner(nu, nu) = DenseMatrix(p.velocity_matrix());
    r.bottomRightCorner(np, np) = p.dense_pressure_metric();
    r = 0.5 * (r + r.transpose()).eval();
    Eigen::GeneralizedSelfAdjointEigenSolver<DenseMatrix> es(kd, r, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    if (es.info() != Eigen::Success) throw SolverError("generalised eigensolve failed");
    const Vector lam = es.eigenvalues();
    if (opts.spectrum != nullptr) opts.spectrum->assign(lam.data(), lam.data() + lam.size());
    const double lo = lam.cwiseAbs().minCoeff();
    if (!(lo > 0.0)) throw SolverError("preconditioned system is singular");
    return lam.cwiseAbs().maxCoeff() / lo;
  }
  if (!opts.allow_lanczos) {
    throw std::invalid_argument("system of size " + std::to_string(n) +
                                " exceeds the dense threshold and Lanczos is disabled");
  }

  SparseMatrix pressure_sum = p.pressure_blocks()[0];
  for (std::size_t i = 1; i < p.pressure_blocks().size(); ++i) pressure_sum += p.pressure_blocks()[i];
  Cholesky sum_chol(pressure_sum);
  if (sum_chol.info() != Eigen::Success) throw SolverError("pressure block factorisation failed");
  const auto sum_inverse = [&sum_chol](const Vector& b) -> Vector { return sum_chol.solve(b); };
  const SaddleFactorisation lu(k);

  std::vector<double> ritz_hi, ritz_lo;
  const double hi = lanczos_max_abs(
      n, [&k](const Vector& x) -> Vector { return k * x; },
      [&p](const Vector& x) { return p.apply(x); }, opts.lanczos_max_steps, opts.lanczos_tol,
      &ritz_hi);
  const double inv_lo = lanczos_max_abs(
      n, [&lu](const Vector& x) { return lu.solve(x); },
      [&](const Vector& x) { return apply_metric(p, pressure_sum, sum_inverse, x); },
      opts.lanczos_max_steps, opts.lanczos_tol, &ritz_lo);
  if (opts.spectrum != nullptr) {
    opts.spectrum->clear();
    for (double t : ritz_lo) opts.spectrum->push_back(1.0 / t);
    opts.spectrum->insert(opts.spectrum->end(), ritz_hi.begin(), ritz_hi.end());
  }
  return hi * inv_lo;
}

DenseMatrix kernel_basis(const SparseMatrix& b) {
  const DenseMatrix bt = DenseMatrix(b).transpose();
  Eigen::ColPivHouseholderQR<DenseMatrix> qr(bt);
  const int rank = static_cast<int>(qr.rank());
  const DenseMatrix q = qr.householderQ();
  return q.rightCols(bt.rows() - rank);
}

void write_spectrum_csv(const std::vector<double>& values, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "eigenvalue\n" << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (double v : values) out << v << '\n';
}

}  // namespace dfsolve
