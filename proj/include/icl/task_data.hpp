#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "icl/config.hpp"

namespace icl {

using ScalarFn = std::function<double(double)>;

class UnknownFunctionError : public std::invalid_argument {
 public:
  explicit UnknownFunctionError(std::string_view name);
};

/// Pointwise function by name: relu, tanh, identity, or anything registered
/// through register_activation. The same registry serves the target sigma*
/// and the MLP activation sigma.
ScalarFn target_fn(std::string_view name);
bool is_known_activation(std::string_view name);
/// Adds (or replaces) a user pointwise function. Builtins cannot be replaced.
void register_activation(std::string name, ScalarFn fn);

struct TaskVector {
  Eigen::VectorXd xi;
};

/// One prompt. Column i of context_x is x_{i+1}; the zero label placeholder
/// of the embedding matrix is never stored.
struct Prompt {
  Eigen::MatrixXd context_x;  // d x ell
  Eigen::VectorXd context_y;  // ell
  Eigen::VectorXd query_x;    // d
  double query_y = 0.0;
};

struct TrainingSet {
  std::vector<Prompt> prompts;
  /// 0-based task index of each prompt.
  std::vector<int> task_of;
  std::vector<TaskVector> tasks;

  [[nodiscard]] Eigen::VectorXd query_labels() const;
  /// Order-sensitive hash of every stored number.
  [[nodiscard]] std::uint64_t checksum() const;
};

struct PromptOptions {
  int ell = 1;
  double rho = 0.0;
  bool query_noise = true;
};

TaskVector sample_task(RngStream& stream, int d);

/// x_i ~ N(0, I_d/d), y_i = target(xi^T x_i) + eps_i with eps_i ~ N(0, rho)
/// for all ell + 1 positions.
Prompt sample_prompt(RngStream& stream, const TaskVector& task, const ScalarFn& target,
                     const PromptOptions& options);
Prompt sample_prompt(RngStream& stream, const TaskVector& task, const ExperimentConfig& cfg);

/// k tasks from stream.substream(0); prompt j uses task j mod k and its own
/// stream.substream(j + 1).
TrainingSet build_dataset(const RngStream& stream, const ExperimentConfig& cfg);

/// Audit dump: prompt_index, task_index, position, x_1..x_d, y. Position
/// ell + 1 is the query.
void write_dataset_csv(const TrainingSet& set, const std::filesystem::path& path);

}  // namespace icl
