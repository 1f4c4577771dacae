#pragma once

#include <functional>

#include <Eigen/Dense>

#include "icl/config.hpp"
#include "icl/features.hpp"
#include "icl/models.hpp"
#include "icl/task_data.hpp"

namespace icl {

struct ErrorEstimate {
  double mean = 0.0;
  /// Plain iid standard error over the test prompts.
  double std_error = 0.0;
  int n_test = 0;
};

/// Fresh test prompts, each with its own task xi ~ N(0, I_d). Prompt j is
/// drawn from stream.substream(j), so any prefix of a larger test set is the
/// smaller test set.
struct TestSet {
  Eigen::MatrixXd phis;           // n_test x d(d+1), rows vec(H_Z)
  Eigen::VectorXd query_y;        // noisy labels y_{l+1}
  Eigen::VectorXd query_signal;   // xi^T x_{l+1}
};

TestSet draw_test_set(const ExperimentConfig& cfg, const RngStream& stream, int count);

/// (y - yhat)^2 per prompt.
Eigen::VectorXd squared_errors(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels);
ErrorEstimate summarize_errors(const Eigen::VectorXd& squared);

struct PairedDifference {
  double mean = 0.0;       // mean(a - b)
  double std_error = 0.0;  // sd(a - b) / sqrt(N)
};

PairedDifference paired_difference(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// ICL error of a fitted model over cfg.n_test fresh prompts from `stream`.
/// Surrogate residual noise comes from `noise` (a fresh draw per prompt and unit).
ErrorEstimate icl_error(const TrainedModel& model, const ExperimentConfig& cfg, const RngStream& stream,
                        const RngStream& noise);
/// As above with the surrogate noise stream derived from `stream`.
ErrorEstimate icl_error(const TrainedModel& model, const ExperimentConfig& cfg, const RngStream& stream);

/// Any predictor of the query label given the prompt and its task; used for
/// baselines such as the zero predictor and the noise-free oracle.
using PromptPredictor = std::function<double(const Prompt&, const TaskVector&)>;
ErrorEstimate icl_error(const PromptPredictor& predictor, const ExperimentConfig& cfg, const RngStream& stream);

/// Monte Carlo estimate of E[y_{l+1}^2], the zero predictor's ICL error.
double null_risk(const ExperimentConfig& cfg, const RngStream& stream, int N);

/// ||vec H_Z||^2 / t over N fresh prompts with fresh tasks.
Eigen::VectorXd lemma1_ratios(const ExperimentConfig& cfg, double t, const RngStream& stream, int N);
/// Sample standard deviation of lemma1_ratios.
double lemma1_diagnostic(const ExperimentConfig& cfg, double t, const RngStream& stream, int N);

struct MomentReport {
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
  /// Sample covariance of f_1^T vec(H_Z) and xi^T x_{l+1}.
  double cross_cov = 0.0;
  double sample_var = 0.0;
  double mean = 0.0;
};

/// Moments of the first random feature f_1^T vec(H_Z) over N fresh prompts
/// that all share the given task.
MomentReport gaussianity_diagnostic(const ExperimentConfig& cfg, const RandomFeatureMatrix& F,
                                    const TaskVector& task, const RngStream& stream, int N);
/// As above with the task drawn from stream.substream(0).
MomentReport gaussianity_diagnostic(const ExperimentConfig& cfg, const RandomFeatureMatrix& F,
                                    const RngStream& stream, int N);

double sample_mean(const Eigen::VectorXd& v);
/// Unbiased (n - 1) sample standard deviation; 0 for fewer than two values.
double sample_stddev(const Eigen::VectorXd& v);

}  // namespace icl
