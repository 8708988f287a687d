#pragma once

#include <vector>

#include "dfsolve/common.hpp"

namespace dfsolve {

/// Positive-weight quadrature on a reference element. `Point` is `Vec2` for the
/// triangle (0,0),(1,0),(0,1) and `double` for the unit interval [0,1].
template <class Point>
struct QuadratureRule {
  std::vector<Point> points;
  std::vector<double> weights;
  int exact_degree = 0;

  std::size_t size() const { return points.size(); }
};

using TriangleRule = QuadratureRule<Vec2>;
using EdgeRule = QuadratureRule<double>;

inline constexpr int kMaxQuadratureDegree = 10;

/// Fully symmetric rule exact for total degree <= `degree` (1..10). Degrees
/// without a dedicated table are served by the next richer rule, so
/// `exact_degree` may exceed the request.
const TriangleRule& triangle_rule(int degree);

/// Gauss-Legendre rule on [0,1] exact for degree <= `degree` (1..10).
const EdgeRule& edge_rule(int degree);

}  // namespace dfsolve
