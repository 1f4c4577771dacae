#pragma once

#include <optional>
#include <stdexcept>
#include <string_view>

#include <Eigen/Dense>

namespace icl {

/// lambda * n / d. The n/d factor keeps the penalty on the same footing as
/// the sum of n squared residuals when n grows like d^2.
double effective_lambda(double lambda, int n, int d);

/// min_w ||X w - y||^2 + lambda_eff ||w||^2. Holds references; the caller
/// keeps design and targets alive for the duration of the solve.
struct RidgeProblem {
  const Eigen::MatrixXd& design;
  const Eigen::VectorXd& targets;
  double lambda_eff = 0.0;
};

enum class SolverPath { Primal, Dual, Spectral };

std::string_view solver_path_name(SolverPath path);

struct RidgeSolution {
  Eigen::VectorXd weights;
  SolverPath solver_path = SolverPath::Primal;
  /// Training RMSE, sqrt(||X w - y||^2 / n).
  double residual_norm = 0.0;
  /// True when the Cholesky factorization needed the diagonal jitter retry.
  bool jittered = false;
};

struct RidgeOptions {
  /// Force a route; by default primal when p <= n, dual otherwise.
  std::optional<SolverPath> route;
};

class RidgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Primal normal equations when p <= n, dual (kernel) form otherwise. Falls
/// back to an eigendecomposition of the Gram matrix, which returns the
/// minimum-norm solution in the exactly singular case, when lambda_eff is
/// negligible against the Gram diagonal scale or the factorization fails.
RidgeSolution solve_ridge(const RidgeProblem& problem, const RidgeOptions& options = {});

/// ||X w - y||^2 + lambda_eff ||w||^2
double ridge_objective(const RidgeProblem& problem, const Eigen::VectorXd& w);
/// 2 X^T (X w - y) + 2 lambda_eff w
Eigen::VectorXd ridge_gradient(const RidgeProblem& problem, const Eigen::VectorXd& w);

}  // namespace icl
