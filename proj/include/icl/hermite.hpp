#pragma once

#include <functional>
#include <vector>

namespace icl {

/// Probabilists' Hermite polynomial He_i(x), via
/// He_{i+1}(x) = x He_i(x) - i He_{i-1}(x).
double hermite_eval(int i, double x);

/// Q-point Gauss rule for expectations under x ~ N(0, 1).
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  [[nodiscard]] int size() const { return static_cast<int>(nodes.size()); }

  /// sum_q w_q f(x_q)
  template <class Fn>
  double expect(Fn&& f) const {
    double acc = 0.0;
    for (std::size_t q = 0; q < nodes.size(); ++q) acc += weights[q] * f(nodes[q]);
    return acc;
  }
};

inline constexpr int kDefaultQuadratureSize = 200;

/// Golub-Welsch on the Jacobi matrix of the probabilists' Hermite family
/// (equivalently, physicists' nodes scaled by sqrt(2), weights by 1/sqrt(pi)).
QuadratureRule gauss_hermite_rule(int Q);

/// Composite Gauss-Legendre rule for N(0, 1) expectations: unit panels with
/// integer edges on [-ceil(half_width), ceil(half_width)], the Gaussian density
/// folded into the weights. Activations with a kink at an integer (relu at 0)
/// are integrated to near machine precision, which a Gauss-Hermite rule of any
/// practical size does not achieve.
QuadratureRule panel_gauss_rule(double half_width = 12.0, int nodes_per_unit = 20);

/// Rule used by make_expansion when none is given.
QuadratureRule default_coefficient_rule(int r);

/// c_i = E[sigma(x) He_i(x)], i = 0..r. Requires rule.size() >= r + 40.
std::vector<double> hermite_coefficients(const std::function<double(double)>& sigma, int r,
                                         const QuadratureRule& rule);

double second_moment(const std::function<double(double)>& sigma, const QuadratureRule& rule);

/// sqrt(second_moment - sum_i c_i^2 / i!). Radicands in [-1e-9, 0) clamp to
/// zero; anything more negative means the quadrature is inconsistent and throws.
double residual_coefficient(const std::vector<double>& coeffs, double second_moment);

struct HermiteExpansion {
  int degree_r = 0;
  std::vector<double> coeffs;  // c_0 .. c_r
  double residual = 0.0;       // c_r^*
  double second_moment = 0.0;  // E[sigma(x)^2]

  /// sum_{i<=r} c_i^2 / i!
  [[nodiscard]] double explained_moment() const;
  /// sum_{i<=r} (c_i / i!) He_i(x), the deterministic part of the surrogate.
  [[nodiscard]] double polynomial(double x) const;
};

HermiteExpansion make_expansion(const std::function<double(double)>& sigma, int r,
                                const QuadratureRule& rule);
HermiteExpansion make_expansion(const std::function<double(double)>& sigma, int r);

/// sigma_hat_r(x) = sum_i (c_i / i!) He_i(x) + c_r^* z. The caller supplies z.
inline double surrogate_apply(const HermiteExpansion& exp, double x, double z) {
  return exp.polynomial(x) + exp.residual * z;
}

double factorial(int i);

}  // namespace icl
