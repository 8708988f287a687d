#pragma once

#include <functional>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace dfsolve {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Vector = Eigen::VectorXd;
using DenseMatrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Fields given in physical coordinates.
using ScalarFn = std::function<double(const Vec2&)>;
using VectorFn = std::function<Vec2(const Vec2&)>;
using TensorFn = std::function<Mat2(const Vec2&)>;

// Fields given cellwise, evaluated at a point of the reference triangle.
using CellScalarFn = std::function<double(int cell, const Vec2& ref)>;
using CellVectorFn = std::function<Vec2(int cell, const Vec2& ref)>;
using CellTensorFn = std::function<Mat2(int cell, const Vec2& ref)>;

class ParseError : public std::runtime_error {
 public:
  ParseError(int line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  int line() const noexcept { return line_; }

 private:
  int line_;
};

/// Structural inconsistency in otherwise well-formed input (mesh incidence, tags).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AssemblyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Factorisation or eigen-solver failure.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Largest entry of |A - A^T|.
double max_asymmetry(const SparseMatrix& a);

}  // namespace dfsolve
