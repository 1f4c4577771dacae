#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <variant>

#include <Eigen/Dense>

#include "icl/config.hpp"
#include "icl/features.hpp"
#include "icl/hermite.hpp"
#include "icl/ridge.hpp"
#include "icl/task_data.hpp"

namespace icl {

using FeatureMatrixPtr = std::shared_ptr<const RandomFeatureMatrix>;

/// Linear-attention predictor vec(Gamma)^T vec(H_Z).
struct LinearModel {
  Eigen::VectorXd gamma_vec;
  SolverPath solver_path = SolverPath::Primal;
};

/// Random-feature MLP head w^T sigma(F^T vec(H_Z)).
struct MlpModel {
  Eigen::VectorXd w;
  std::string activation_name;
  FeatureMatrixPtr features;
  std::uint64_t features_checksum = 0;
  SolverPath solver_path = SolverPath::Primal;
};

/// Hermite surrogate w^T sigma_hat_r(F^T vec(H_Z)).
struct SurrogateModel {
  Eigen::VectorXd w;
  /// Name of the activation the expansion was built from.
  std::string activation_name;
  HermiteExpansion expansion;
  FeatureMatrixPtr features;
  std::uint64_t features_checksum = 0;
  SolverPath solver_path = SolverPath::Primal;
  /// Non-empty only when residual noise is frozen: one z per hidden unit,
  /// reused for every prediction.
  Eigen::VectorXd frozen_noise;
};

using TrainedModel = std::variant<LinearModel, MlpModel, SurrogateModel>;

/// "linear", "mlp_<sigma>" or "surrogate_<sigma>".
std::string model_label(const TrainedModel& model);

// ---- design matrices ------------------------------------------------------

/// sigma applied entrywise.
Eigen::MatrixXd activation_design(const Eigen::MatrixXd& preactivations, const ScalarFn& sigma);

/// Entry (j, i) is surrogate_apply(exp, preact(j, i), z) with z the i-th
/// normal draw of noise.substream(j).
Eigen::MatrixXd surrogate_design(const Eigen::MatrixXd& preactivations, const HermiteExpansion& exp,
                                 const RngStream& noise);

// ---- fitting --------------------------------------------------------------

LinearModel fit_linear(const TrainingSet& trainset, const ExperimentConfig& cfg);
/// `phis` holds vec(H_Z) rows (build_h_batch) and `targets` the query labels.
LinearModel fit_linear(const Eigen::MatrixXd& phis, const Eigen::VectorXd& targets, const ExperimentConfig& cfg);

MlpModel fit_mlp(const TrainingSet& trainset, FeatureMatrixPtr F, const ExperimentConfig& cfg);
MlpModel fit_mlp_preactivated(const Eigen::MatrixXd& preactivations, const Eigen::VectorXd& targets,
                              FeatureMatrixPtr F, const ExperimentConfig& cfg);

SurrogateModel fit_surrogate(const TrainingSet& trainset, FeatureMatrixPtr F, const HermiteExpansion& exp,
                             const ExperimentConfig& cfg, const RngStream& noise);
SurrogateModel fit_surrogate_preactivated(const Eigen::MatrixXd& preactivations, const Eigen::VectorXd& targets,
                                          FeatureMatrixPtr F, const HermiteExpansion& exp,
                                          const ExperimentConfig& cfg, const RngStream& noise);

// ---- prediction -----------------------------------------------------------

double predict_linear(const LinearModel& model, const FeatureVector& phi);
double predict_mlp(const MlpModel& model, const FeatureVector& phi);
/// Draws one fresh z per hidden unit from `noise` unless the model is frozen.
double predict_surrogate(const SurrogateModel& model, const FeatureVector& phi, RngStream& noise);

/// Batched predictions for the vec(H_Z) rows of `phis`. Surrogate row j draws
/// its residual noise from noise.substream(j).
Eigen::VectorXd predict_batch(const TrainedModel& model, const Eigen::MatrixXd& phis, const RngStream& noise);

/// Same as predict_batch for MLP/surrogate models given F^T phi rows that were
/// already computed with the model's feature matrix.
Eigen::VectorXd predict_preactivated(const TrainedModel& model, const Eigen::MatrixXd& preactivations,
                                     const RngStream& noise);

const Eigen::VectorXd& model_weights(const TrainedModel& model);
SolverPath model_solver_path(const TrainedModel& model);

// ---- persistence ----------------------------------------------------------

struct ModelProvenance {
  int d = 0;
  int ell = 0;
  std::uint64_t master_seed = 0;
};

void save_model(const std::filesystem::path& path, const TrainedModel& model, const ModelProvenance& provenance);
/// MLP and surrogate models need the feature matrix they were fit with; its
/// checksum must match the one recorded in the file.
std::pair<TrainedModel, ModelProvenance> load_model(const std::filesystem::path& path, FeatureMatrixPtr F);

}  // namespace icl
