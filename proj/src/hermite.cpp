#include "icl/hermite.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include <Eigen/Eigenvalues>

namespace icl {

double factorial(int i) {
  double f = 1.0;
  for (int k = 2; k <= i; ++k) f *= k;
  return f;
}

double hermite_eval(int i, double x) {
  if (i < 0) throw std::invalid_argument("Hermite degree must be >= 0");
  if (i == 0) return 1.0;
  double prev = 1.0;
  double cur = x;
  for (int k = 1; k < i; ++k) {
    const double next = x * cur - k * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

QuadratureRule gauss_hermite_rule(int Q) {
  if (Q < 1) throw std::invalid_argument("quadrature size must be >= 1");
  // Monic recurrence He_{k+1} = x He_k - k He_{k-1}: zero diagonal,
  // off-diagonal sqrt(k).
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(Q);
  Eigen::VectorXd sub(std::max(Q - 1, 0));
  for (int k = 1; k < Q; ++k) sub(k - 1) = std::sqrt(static_cast<double>(k));

  QuadratureRule rule;
  rule.nodes.resize(static_cast<std::size_t>(Q));
  rule.weights.resize(static_cast<std::size_t>(Q));
  if (Q == 1) {
    rule.nodes[0] = 0.0;
    rule.weights[0] = 1.0;
    return rule;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  eig.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (eig.info() != Eigen::Success) throw std::runtime_error("Golub-Welsch eigensolve failed");
  for (int q = 0; q < Q; ++q) {
    rule.nodes[static_cast<std::size_t>(q)] = eig.eigenvalues()(q);
    const double v0 = eig.eigenvectors()(0, q);
    rule.weights[static_cast<std::size_t>(q)] = v0 * v0;
  }
  // Symmetrize: the measure is even, so exact nodes come in +-pairs.
  for (int q = 0; q < Q / 2; ++q) {
    const auto lo = static_cast<std::size_t>(q);
    const auto hi = static_cast<std::size_t>(Q - 1 - q);
    const double x = 0.5 * (rule.nodes[hi] - rule.nodes[lo]);
    const double w = 0.5 * (rule.weights[hi] + rule.weights[lo]);
    rule.nodes[lo] = -x;
    rule.nodes[hi] = x;
    rule.weights[lo] = rule.weights[hi] = w;
  }
  if (Q % 2 == 1) rule.nodes[static_cast<std::size_t>(Q / 2)] = 0.0;
  const double total = std::accumulate(rule.weights.begin(), rule.weights.end(), 0.0);
  for (auto& w : rule.weights) w /= total;
  return rule;
}

QuadratureRule panel_gauss_rule(double half_width, int nodes_per_unit) {
  if (!(half_width > 0.0) || nodes_per_unit < 2) throw std::invalid_argument("bad panel rule parameters");
  // Gauss-Legendre nodes on [-1, 1]; recurrence coefficient k / sqrt(4k^2 - 1).
  const int G = nodes_per_unit;
  Eigen::VectorXd diag = Eigen::VectorXd::Zero(G);
  Eigen::VectorXd sub(G - 1);
  for (int k = 1; k < G; ++k) sub(k - 1) = k / std::sqrt(4.0 * k * k - 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  eig.computeFromTridiagonal(diag, sub, Eigen::ComputeEigenvectors);
  if (eig.info() != Eigen::Success) throw std::runtime_error("Golub-Welsch eigensolve failed");

  const int panels = static_cast<int>(std::ceil(half_width));
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * M_PI);
  QuadratureRule rule;
  for (int p = -panels; p < panels; ++p) {
    const double mid = p + 0.5;
    for (int g = 0; g < G; ++g) {
      const double x = mid + 0.5 * eig.eigenvalues()(g);
      const double v0 = eig.eigenvectors()(0, g);
      // Legendre weights sum to 2 on [-1, 1]; the panel has width 1.
      const double w = v0 * v0;
      rule.nodes.push_back(x);
      rule.weights.push_back(w * inv_sqrt_2pi * std::exp(-0.5 * x * x));
    }
  }
  return rule;
}

QuadratureRule default_coefficient_rule(int r) {
  // 20 nodes per unit panel keeps polynomial degrees up to ~3r exact enough on
  // each panel; the panel count widens with r so the tails of He_r^2 are kept.
  const double half_width = std::max(12.0, 4.0 * std::sqrt(static_cast<double>(r) + 1.0) + 8.0);
  return panel_gauss_rule(half_width, std::max(20, r + 8));
}

std::vector<double> hermite_coefficients(const std::function<double(double)>& sigma, int r,
                                         const QuadratureRule& rule) {
  if (r < 0) throw std::invalid_argument("degree r must be >= 0");
  if (rule.size() < r + 40) {
    throw std::invalid_argument("quadrature rule too small: need Q >= r + 40, got Q=" +
                                std::to_string(rule.size()));
  }
  std::vector<double> c(static_cast<std::size_t>(r) + 1, 0.0);
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    const double x = rule.nodes[q];
    const double ws = rule.weights[q] * sigma(x);
    // He_0..He_r at x by the same recurrence as hermite_eval.
    double prev = 1.0;
    double cur = x;
    c[0] += ws;
    if (r >= 1) c[1] += ws * x;
    for (int k = 1; k < r; ++k) {
      const double next = x * cur - k * prev;
      prev = cur;
      cur = next;
      c[static_cast<std::size_t>(k) + 1] += ws * cur;
    }
  }
  return c;
}

double second_moment(const std::function<double(double)>& sigma, const QuadratureRule& rule) {
  return rule.expect([&](double x) {
    const double s = sigma(x);
    return s * s;
  });
}

double residual_coefficient(const std::vector<double>& coeffs, double second_moment) {
  if (coeffs.empty()) throw std::invalid_argument("coefficient list must hold c_0..c_r");
  double explained = 0.0;
  for (std::size_t i = 0; i < coeffs.size(); ++i) explained += coeffs[i] * coeffs[i] / factorial(static_cast<int>(i));
  const double radicand = second_moment - explained;
  if (radicand < -1e-9) {
    throw std::runtime_error("Hermite coefficients exceed the second moment by " + std::to_string(-radicand) +
                             "; quadrature is inconsistent");
  }
  return std::sqrt(std::max(0.0, radicand));
}

double HermiteExpansion::explained_moment() const {
  double acc = 0.0;
  for (std::size_t i = 0; i < coeffs.size(); ++i) acc += coeffs[i] * coeffs[i] / factorial(static_cast<int>(i));
  return acc;
}

double HermiteExpansion::polynomial(double x) const {
  double acc = coeffs[0];
  if (degree_r == 0) return acc;
  double prev = 1.0;
  double cur = x;
  double inv_fact = 1.0;
  acc += coeffs[1] * cur;
  for (int k = 1; k < degree_r; ++k) {
    const double next = x * cur - k * prev;
    prev = cur;
    cur = next;
    inv_fact /= (k + 1);
    acc += coeffs[static_cast<std::size_t>(k) + 1] * inv_fact * cur;
  }
  return acc;
}

HermiteExpansion make_expansion(const std::function<double(double)>& sigma, int r, const QuadratureRule& rule) {
  HermiteExpansion exp;
  exp.degree_r = r;
  exp.coeffs = hermite_coefficients(sigma, r, rule);
  exp.second_moment = second_moment(sigma, rule);
  exp.residual = residual_coefficient(exp.coeffs, exp.second_moment);
  return exp;
}

HermiteExpansion make_expansion(const std::function<double(double)>& sigma, int r) {
  return make_expansion(sigma, r, default_coefficient_rule(r));
}

}  // namespace icl
