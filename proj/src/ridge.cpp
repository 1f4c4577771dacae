#include "icl/ridge.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>

namespace icl {

namespace {

constexpr double kSpectralFallbackRatio = 1e-10;
constexpr double kJitterRatio = 1e-10;

// Lower triangle of the symmetric Gram matrix and the matching right-hand
// side: X^T X and X^T y (primal) or X X^T and y (dual).
struct GramSystem {
  Eigen::MatrixXd gram;
  Eigen::VectorXd rhs;
  double scale = 0.0;  // trace / dimension
};

GramSystem build_gram(const RidgeProblem& problem, bool primal) {
  const auto& X = problem.design;
  GramSystem sys;
  if (primal) {
    sys.gram = Eigen::MatrixXd::Zero(X.cols(), X.cols());
    sys.gram.selfadjointView<Eigen::Lower>().rankUpdate(X.transpose());
    sys.rhs.noalias() = X.transpose() * problem.targets;
  } else {
    sys.gram = Eigen::MatrixXd::Zero(X.rows(), X.rows());
    sys.gram.selfadjointView<Eigen::Lower>().rankUpdate(X);
    sys.rhs = problem.targets;
  }
  sys.scale = sys.gram.diagonal().sum() / static_cast<double>(sys.gram.rows());
  return sys;
}

Eigen::VectorXd spectral_solve(const GramSystem& sys, double lambda) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sys.gram);  // reads the lower triangle
  if (eig.info() != Eigen::Success) throw RidgeError("spectral ridge fallback failed to converge");
  const Eigen::VectorXd& e = eig.eigenvalues();
  const double top = std::max(e.cwiseAbs().maxCoeff(), 0.0);
  const double cutoff = top * static_cast<double>(e.size()) * std::numeric_limits<double>::epsilon();
  Eigen::VectorXd proj = eig.eigenvectors().transpose() * sys.rhs;
  for (Eigen::Index i = 0; i < e.size(); ++i) {
    const double shifted = e(i) + lambda;
    proj(i) = shifted > cutoff ? proj(i) / shifted : 0.0;
  }
  return eig.eigenvectors() * proj;
}

}  // namespace

double effective_lambda(double lambda, int n, int d) {
  return lambda * static_cast<double>(n) / static_cast<double>(d);
}

std::string_view solver_path_name(SolverPath path) {
  switch (path) {
    case SolverPath::Primal:
      return "primal";
    case SolverPath::Dual:
      return "dual";
    case SolverPath::Spectral:
      return "spectral";
  }
  return "unknown";
}

RidgeSolution solve_ridge(const RidgeProblem& problem, const RidgeOptions& options) {
  const auto& X = problem.design;
  const auto& y = problem.targets;
  if (y.size() != X.rows()) throw std::invalid_argument("ridge targets length does not match design rows");
  if (!(problem.lambda_eff >= 0.0) || !std::isfinite(problem.lambda_eff)) {
    throw std::invalid_argument("lambda_eff must be finite and >= 0");
  }
  if (!X.allFinite() || !y.allFinite()) throw RidgeError("ridge problem has non-finite entries");

  const bool force_spectral = options.route == SolverPath::Spectral;
  bool use_primal = X.cols() <= X.rows();
  if (options.route == SolverPath::Primal) use_primal = true;
  if (options.route == SolverPath::Dual) use_primal = false;
  const double lambda = problem.lambda_eff;

  RidgeSolution sol;
  const GramSystem sys = build_gram(problem, use_primal);
  Eigen::VectorXd coef;

  if (sys.scale == 0.0) {
    coef = Eigen::VectorXd::Zero(sys.rhs.size());
    sol.solver_path = use_primal ? SolverPath::Primal : SolverPath::Dual;
  } else if (force_spectral || lambda < kSpectralFallbackRatio * sys.scale) {
    coef = spectral_solve(sys, lambda);
    sol.solver_path = SolverPath::Spectral;
  } else {
    Eigen::MatrixXd shifted = sys.gram;
    shifted.diagonal().array() += lambda;
    Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(shifted);
    if (llt.info() != Eigen::Success) {
      shifted.diagonal().array() += kJitterRatio * sys.scale;
      llt.compute(shifted);
      sol.jittered = true;
    }
    if (llt.info() == Eigen::Success) {
      coef = llt.solve(sys.rhs);
      // One step of iterative refinement against the unjittered system.
      Eigen::VectorXd r = sys.rhs - lambda * coef;
      r.noalias() -= sys.gram.selfadjointView<Eigen::Lower>() * coef;
      coef += llt.solve(r);
      sol.solver_path = use_primal ? SolverPath::Primal : SolverPath::Dual;
    } else {
      coef = spectral_solve(sys, lambda);
      sol.solver_path = SolverPath::Spectral;
      sol.jittered = false;
    }
  }

  if (use_primal) {
    sol.weights = std::move(coef);
  } else {
    sol.weights.noalias() = X.transpose() * coef;
  }
  if (!sol.weights.allFinite()) throw RidgeError("ridge solve produced non-finite weights");
  sol.residual_norm = X.rows() > 0 ? std::sqrt((X * sol.weights - y).squaredNorm() / static_cast<double>(X.rows())) : 0.0;
  return sol;
}

double ridge_objective(const RidgeProblem& problem, const Eigen::VectorXd& w) {
  return (problem.design * w - problem.targets).squaredNorm() + problem.lambda_eff * w.squaredNorm();
}

Eigen::VectorXd ridge_gradient(const RidgeProblem& problem, const Eigen::VectorXd& w) {
  Eigen::VectorXd residual = problem.design * w - problem.targets;
  Eigen::VectorXd grad = 2.0 * (problem.design.transpose() * residual);
  grad += 2.0 * problem.lambda_eff * w;
  return grad;
}

}  // namespace icl
