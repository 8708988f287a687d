#include "dfsolve/quadrature.hpp"

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <stdexcept>
#include <string>

namespace dfsolve {
namespace {

struct RawPoint {
  double x, y, w;
};

struct RawRule {
  int degree;
  std::vector<RawPoint> points;
};

const std::vector<RawRule>& raw_triangle_rules() {
  static const std::vector<RawRule> rules = {
#include "triangle_rules.inc"
  };
  return rules;
}

std::map<int, TriangleRule> build_triangle_rules() {
  std::map<int, TriangleRule> by_degree;
  for (const auto& raw : raw_triangle_rules()) {
    TriangleRule rule;
    rule.exact_degree = raw.degree;
    for (const auto& p : raw.points) {
      rule.points.emplace_back(p.x, p.y);
      rule.weights.push_back(p.w);
    }
    by_degree.emplace(raw.degree, std::move(rule));
  }
  return by_degree;
}

// Nodes and weights of the n-point Gauss-Legendre rule, mapped to [0,1].
EdgeRule gauss_legendre(int n) {
  EdgeRule rule;
  rule.exact_degree = 2 * n - 1;
  rule.points.resize(n);
  rule.weights.resize(n);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    rule.points[n - 1 - i] = 0.5 * (1.0 + x);
    rule.weights[n - 1 - i] = 1.0 / ((1.0 - x * x) * dp * dp);
  }
  return rule;
}

void check_degree(int degree) {
  if (degree < 1 || degree > kMaxQuadratureDegree) {
    throw std::invalid_argument("quadrature degree " + std::to_string(degree) +
                                " outside supported range 1..10");
  }
}

}  // namespace

const TriangleRule& triangle_rule(int degree) {
  check_degree(degree);
  static const std::map<int, TriangleRule> rules = build_triangle_rules();
  return rules.lower_bound(degree)->second;
}

const EdgeRule& edge_rule(int degree) {
  check_degree(degree);
  static const std::array<EdgeRule, 6> rules = [] {
    std::array<EdgeRule, 6> r;
    for (int n = 1; n <= 6; ++n) r[n - 1] = gauss_legendre(n);
    return r;
  }();
  return rules[degree / 2];
}

}  // namespace dfsolve
