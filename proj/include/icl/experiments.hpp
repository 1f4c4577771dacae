#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "icl/config.hpp"

namespace icl {

enum class SweepParam { N, Ell, M, Lambda };
enum class ModelKind { Linear, Mlp, Surrogate };

std::string_view sweep_param_name(SweepParam param);
std::optional<SweepParam> parse_sweep_param(std::string_view name);
std::string_view model_kind_name(ModelKind kind);

struct SweepSpec {
  std::string name;
  ExperimentConfig base;
  SweepParam sweep_param = SweepParam::N;
  std::vector<double> values;
  std::vector<ModelKind> models;
  /// When non-empty, MLP and surrogate models are fit once per ratio at
  /// m = round(ratio * n), all sharing the leading columns of one F. Row
  /// labels then carry the width, e.g. "mlp_relu@m=2400".
  std::vector<double> width_ratios;
  int n_runs = 20;
};

/// Config for one sweep point: base with the swept field replaced.
ExperimentConfig substitute(const ExperimentConfig& base, SweepParam param, double value);

/// Throws ConfigError when the sweep spec or any substituted config is invalid.
void validate_spec(const SweepSpec& spec);

inline constexpr int kFullScaleD = 80;
inline constexpr int kQuickScaleD = 40;

/// fig1_relu, fig1_tanh, fig2a, fig2b, fig2c. Sizes scale with `d`:
/// l = d, k = d/2, n = 1.5 d^2, m = d^2.
SweepSpec preset(std::string_view name, int d = kFullScaleD);
std::vector<std::string> preset_names();

struct SweepRow {
  double sweep_value = 0.0;
  std::string model;
  int run_index = 0;
  double icl_error = 0.0;
  double std_error = 0.0;
  double null_risk = 0.0;
  std::string solver_path;
  double wall_time_seconds = 0.0;
  bool failed = false;
  std::string error_message;
  std::uint64_t dataset_checksum = 0;
  std::uint64_t features_checksum = 0;
};

struct AggregateRow {
  double sweep_value = 0.0;
  std::string model;
  double mean = 0.0;
  /// Across-run sample standard deviation (n - 1 denominator).
  double std = 0.0;
  int runs = 0;
};

struct SweepResult {
  SweepParam sweep_param = SweepParam::N;
  std::vector<SweepRow> rows;
  std::vector<AggregateRow> aggregate;

  [[nodiscard]] bool any_failed() const;
  /// Aggregate entry for (value, model); throws std::out_of_range if absent.
  [[nodiscard]] const AggregateRow& at(double sweep_value, std::string_view model) const;
  /// Per-run errors of one (value, model) group ordered by run index,
  /// failed runs excluded.
  [[nodiscard]] std::vector<std::pair<int, double>> run_errors(double sweep_value, std::string_view model) const;
};

struct SweepOptions {
  int workers = 1;
  /// Called after each finished (value, run) job with (done, total).
  std::function<void(int, int)> progress;
};

/// Seed of Monte Carlo run `run_index` at one sweep value.
std::uint64_t run_seed(std::uint64_t master_seed, double sweep_value, int run_index);

SweepResult run_sweep(const SweepSpec& spec, const SweepOptions& options = {});

/// Recomputes result.aggregate from the non-failed rows. Groups are ordered
/// by (sweep_value, model) and reduced over ascending run_index.
SweepResult aggregate(SweepResult result);

/// Paired comparison of two models over runs at one sweep value:
/// mean and standard error of (err_a - err_b) across the shared runs.
struct RunPairedDifference {
  double mean = 0.0;
  double std_error = 0.0;
  int runs = 0;
};
RunPairedDifference paired_over_runs(const SweepResult& result, double sweep_value, std::string_view model_a,
                                     std::string_view model_b);

}  // namespace icl
