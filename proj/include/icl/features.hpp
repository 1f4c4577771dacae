#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <stdexcept>
#include <string_view>

#include <Eigen/Dense>

#include "icl/config.hpp"
#include "icl/task_data.hpp"

namespace icl {

/// vec() order for the d x (d+1) matrix H_Z: column-major, so entry (a, b)
/// sits at index a + d * b. LinearModel weights use the same order.
inline constexpr std::string_view kColumnMajorLayout = "col-major/d-by-d+1";

struct FeatureVector {
  Eigen::VectorXd values;
  std::string_view layout_tag = kColumnMajorLayout;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DegenerateConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The two factors of the rank-one H_Z = x_{l+1} u^T, where
/// u = [(d/l) sum_i y_i x_i ; (1/l) sum_i y_i^2].
struct RankOneFactors {
  Eigen::VectorXd query_x;  // d
  Eigen::VectorXd u;        // d + 1
};

RankOneFactors h_factors(const Prompt& prompt, int d, int ell);

/// vec(H_Z) for one prompt. O(d l + d^2).
FeatureVector build_h(const Prompt& prompt, int d, int ell);

/// Row j is vec(H_Z) of prompts[j]; shape prompts.size() x d(d+1).
Eigen::MatrixXd build_h_batch(std::span<const Prompt> prompts, int d, int ell);

/// Monte Carlo estimate of tr(Cov(vec H_Z)) = E ||vec H_Z||^2 over cfg.n_cal
/// prompts. Each prompt draws a fresh task unless `fixed_task` is given, in
/// which case the trace is conditional on that task.
/// Throws DegenerateConfigError when the estimate is <= 1e-12.
double calibrate_trace(const RngStream& stream, const ExperimentConfig& cfg,
                       const TaskVector* fixed_task = nullptr);

/// Fixed random first layer of the MLP head, p x m with iid N(0, 1/t) entries.
struct RandomFeatureMatrix {
  Eigen::MatrixXd entries;
  double trace_constant = 1.0;
  std::uint64_t checksum = 0;

  [[nodiscard]] Eigen::Index p() const { return entries.rows(); }
  [[nodiscard]] Eigen::Index m() const { return entries.cols(); }
};

std::uint64_t checksum_matrix(const Eigen::MatrixXd& matrix);

RandomFeatureMatrix sample_feature_matrix(RngStream& stream, Eigen::Index p, Eigen::Index m, double t);

/// Wraps an explicit matrix (tests, loaded artifacts); computes the checksum.
RandomFeatureMatrix make_feature_matrix(Eigen::MatrixXd entries, double t);

/// F^T phi.
Eigen::VectorXd hidden_preactivations(const RandomFeatureMatrix& F, const FeatureVector& phi);
/// Row j is F^T phi_j for the rows phi_j of `phis`; shape n x m.
Eigen::MatrixXd hidden_preactivations(const RandomFeatureMatrix& F, const Eigen::MatrixXd& phis);

struct FeatureArtifactHeader {
  int d = 0;
  int ell = 0;
  int m = 0;
  double trace_constant = 0.0;
  std::uint64_t master_seed = 0;
  std::uint64_t checksum = 0;
};

/// Binary artifact: magic, header, then p*m doubles in column-major order.
void save_feature_artifact(const std::filesystem::path& path, const RandomFeatureMatrix& F,
                           const FeatureArtifactHeader& header);
/// Throws std::runtime_error on a malformed file or checksum mismatch.
std::pair<RandomFeatureMatrix, FeatureArtifactHeader> load_feature_artifact(const std::filesystem::path& path);

}  // namespace icl
