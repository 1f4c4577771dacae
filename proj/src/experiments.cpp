#include "icl/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <thread>

#include "icl/evaluation.hpp"
#include "icl/features.hpp"
#include "icl/hermite.hpp"
#include "icl/models.hpp"
#include "icl/task_data.hpp"

namespace icl {

std::string_view sweep_param_name(SweepParam param) {
  switch (param) {
    case SweepParam::N:
      return "n";
    case SweepParam::Ell:
      return "ell";
    case SweepParam::M:
      return "m";
    case SweepParam::Lambda:
      return "lambda";
  }
  return "unknown";
}

std::optional<SweepParam> parse_sweep_param(std::string_view name) {
  for (auto p : {SweepParam::N, SweepParam::Ell, SweepParam::M, SweepParam::Lambda}) {
    if (sweep_param_name(p) == name) return p;
  }
  return std::nullopt;
}

std::string_view model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Linear:
      return "linear";
    case ModelKind::Mlp:
      return "mlp";
    case ModelKind::Surrogate:
      return "surrogate";
  }
  return "unknown";
}

ExperimentConfig substitute(const ExperimentConfig& base, SweepParam param, double value) {
  ExperimentConfig cfg = base;
  switch (param) {
    case SweepParam::N:
      cfg.n = static_cast<int>(std::llround(value));
      break;
    case SweepParam::Ell:
      cfg.ell = static_cast<int>(std::llround(value));
      break;
    case SweepParam::M:
      cfg.m = static_cast<int>(std::llround(value));
      break;
    case SweepParam::Lambda:
      cfg.lambda = value;
      break;
  }
  return cfg;
}

void validate_spec(const SweepSpec& spec) {
  std::vector<std::string> bad;
  if (spec.values.empty()) bad.emplace_back("values");
  for (std::size_t i = 1; i < spec.values.size(); ++i) {
    if (!(spec.values[i] > spec.values[i - 1])) {
      bad.emplace_back("values");
      break;
    }
  }
  if (spec.models.empty()) bad.emplace_back("models");
  if (spec.n_runs < 1) bad.emplace_back("n_runs");
  for (double r : spec.width_ratios) {
    if (!(r > 0.0)) {
      bad.emplace_back("width_ratios");
      break;
    }
  }
  if (!bad.empty()) {
    std::string msg = "invalid sweep spec:";
    for (const auto& b : bad) msg += " " + b;
    throw ConfigError(msg, bad);
  }
  for (double v : spec.values) validate_config(substitute(spec.base, spec.sweep_param, v));
}

namespace {

std::vector<double> scaled(std::initializer_list<double> ratios, double unit) {
  std::vector<double> out;
  for (double r : ratios) out.push_back(std::round(r * unit));
  return out;
}

ExperimentConfig preset_base(int d, std::string target) {
  ExperimentConfig cfg;
  cfg.d = d;
  cfg.ell = d;
  cfg.k = std::max(1, d / 2);
  cfg.n = static_cast<int>(std::llround(1.5 * d * d));
  cfg.m = d * d;
  cfg.rho = 0.01;
  cfg.lambda = 1e-8;
  cfg.target_name = std::move(target);
  cfg.activation_name = "relu";
  cfg.degree_r = 4;
  cfg.n_test = 2000;
  cfg.n_cal = 2000;
  cfg.n_runs = 20;
  return cfg;
}

}  // namespace

std::vector<std::string> preset_names() { return {"fig1_relu", "fig1_tanh", "fig2a", "fig2b", "fig2c"}; }

SweepSpec preset(std::string_view name, int d) {
  if (d < 2) throw ConfigError("preset scale d must be >= 2", {"d"});
  SweepSpec spec;
  spec.name = std::string(name);
  spec.models = {ModelKind::Linear, ModelKind::Mlp, ModelKind::Surrogate};
  const double dd = static_cast<double>(d) * d;
  if (name == "fig1_relu" || name == "fig1_tanh") {
    spec.base = preset_base(d, name == "fig1_relu" ? "relu" : "tanh");
    spec.sweep_param = SweepParam::N;
    spec.values = scaled({0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0}, dd);
  } else if (name == "fig2a") {
    spec.base = preset_base(d, "relu");
    spec.sweep_param = SweepParam::Ell;
    spec.values = scaled({0.25, 0.5, 1.0, 1.5, 2.0}, d);
  } else if (name == "fig2b") {
    spec.base = preset_base(d, "relu");
    spec.sweep_param = SweepParam::M;
    spec.values = scaled({0.25, 0.5, 0.75, 0.9, 1.0, 1.1, 1.25, 1.5, 2.0, 4.0}, spec.base.n);
  } else if (name == "fig2c") {
    spec.base = preset_base(d, "relu");
    spec.sweep_param = SweepParam::Lambda;
    spec.values = {1e-8, 1e-6, 1e-4, 1e-2, 1e-1};
    spec.width_ratios = {0.75, 1.0, 1.25};
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'", {"preset"});
  }
  spec.n_runs = spec.base.n_runs;
  spec.base = validate_config(spec.base);
  return spec;
}

std::uint64_t run_seed(std::uint64_t master_seed, double sweep_value, int run_index) {
  return mix64(mix64(master_seed, std::bit_cast<std::uint64_t>(sweep_value)), static_cast<std::uint64_t>(run_index));
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<std::string> row_labels(const SweepSpec& spec, const ExperimentConfig& cfg) {
  std::vector<std::string> labels;
  for (ModelKind kind : spec.models) {
    if (kind == ModelKind::Linear) {
      labels.emplace_back("linear");
      continue;
    }
    const std::string base = std::string(model_kind_name(kind)) + "_" + cfg.activation_name;
    if (spec.width_ratios.empty()) {
      labels.push_back(base);
    } else {
      for (double r : spec.width_ratios) {
        labels.push_back(base + "@m=" + std::to_string(std::llround(r * cfg.n)));
      }
    }
  }
  return labels;
}

std::vector<SweepRow> run_one(const SweepSpec& spec, std::size_t value_index, int run_index,
                              const HermiteExpansion& expansion) {
  const double value = spec.values[value_index];
  const ExperimentConfig cfg = validate_config(substitute(spec.base, spec.sweep_param, value));
  const std::uint64_t seed = run_seed(spec.base.master_seed, value, run_index);
  const auto job_start = Clock::now();

  std::vector<SweepRow> rows;
  auto make_row = [&](std::string label) {
    SweepRow row;
    row.sweep_value = value;
    row.model = std::move(label);
    row.run_index = run_index;
    return row;
  };

  try {
    const TrainingSet train = build_dataset(derive_stream(seed, Purpose::Task, 0), cfg);
    const std::uint64_t dataset_checksum = train.checksum();
    const Eigen::MatrixXd phis = build_h_batch(train.prompts, cfg.d, cfg.ell);
    const Eigen::VectorXd targets = train.query_labels();
    const TestSet test = draw_test_set(cfg, derive_stream(seed, Purpose::Test, 0), cfg.n_test);
    const double null = test.query_y.squaredNorm() / static_cast<double>(test.query_y.size());
    const double shared_seconds = seconds_since(job_start);

    auto finish = [&](SweepRow row, const Eigen::VectorXd& predictions, SolverPath path, double seconds,
                      std::uint64_t features_checksum) {
      const ErrorEstimate e = summarize_errors(squared_errors(predictions, test.query_y));
      row.icl_error = e.mean;
      row.std_error = e.std_error;
      row.null_risk = null;
      row.solver_path = std::string(solver_path_name(path));
      row.wall_time_seconds = shared_seconds + seconds;
      row.dataset_checksum = dataset_checksum;
      row.features_checksum = features_checksum;
      rows.push_back(std::move(row));
    };

    const bool wants_hidden = std::any_of(spec.models.begin(), spec.models.end(),
                                          [](ModelKind k) { return k != ModelKind::Linear; });
    std::shared_ptr<const RandomFeatureMatrix> F_full;
    Eigen::MatrixXd train_pre;
    Eigen::MatrixXd test_pre;
    std::vector<int> widths;
    if (wants_hidden) {
      if (spec.width_ratios.empty()) {
        widths.push_back(cfg.m);
      } else {
        for (double r : spec.width_ratios) widths.push_back(static_cast<int>(std::llround(r * cfg.n)));
      }
      const int m_max = *std::max_element(widths.begin(), widths.end());
      const double t = calibrate_trace(derive_stream(seed, Purpose::Calibration, 0), cfg);
      RngStream fs = derive_stream(seed, Purpose::Features, 0);
      F_full = std::make_shared<const RandomFeatureMatrix>(sample_feature_matrix(fs, cfg.feature_dim(), m_max, t));
      train_pre = hidden_preactivations(*F_full, phis);
      test_pre = hidden_preactivations(*F_full, test.phis);
    }

    const std::vector<std::string> labels = row_labels(spec, cfg);
    std::size_t label_index = 0;
    for (ModelKind kind : spec.models) {
      if (kind == ModelKind::Linear) {
        const auto start = Clock::now();
        const LinearModel model = fit_linear(phis, targets, cfg);
        const Eigen::VectorXd pred = test.phis * model.gamma_vec;
        finish(make_row(labels[label_index++]), pred, model.solver_path, seconds_since(start), 0);
        continue;
      }
      for (int m : widths) {
        const auto start = Clock::now();
        ExperimentConfig cfg_m = cfg;
        cfg_m.m = m;
        std::shared_ptr<const RandomFeatureMatrix> F = F_full;
        if (m != F_full->m()) {
          F = std::make_shared<const RandomFeatureMatrix>(
              make_feature_matrix(F_full->entries.leftCols(m), F_full->trace_constant));
        }
        Eigen::MatrixXd tr_narrow;
        Eigen::MatrixXd te_narrow;
        if (m != F_full->m()) {
          tr_narrow = train_pre.leftCols(m);
          te_narrow = test_pre.leftCols(m);
        }
        const Eigen::MatrixXd& tr = m != F_full->m() ? tr_narrow : train_pre;
        const Eigen::MatrixXd& te = m != F_full->m() ? te_narrow : test_pre;
        TrainedModel model;
        if (kind == ModelKind::Mlp) {
          model = fit_mlp_preactivated(tr, targets, F, cfg_m);
        } else {
          model = fit_surrogate_preactivated(tr, targets, F, expansion, cfg_m,
                                             derive_stream(seed, Purpose::SurrogateNoise, 0));
        }
        const Eigen::VectorXd pred = predict_preactivated(model, te, derive_stream(seed, Purpose::SurrogateNoise, 1));
        finish(make_row(labels[label_index++]), pred, model_solver_path(model), seconds_since(start), F->checksum);
      }
    }
  } catch (const std::exception& e) {
    rows.clear();
    for (auto& label : row_labels(spec, cfg)) {
      SweepRow row = make_row(std::move(label));
      row.failed = true;
      row.icl_error = std::nan("");
      row.std_error = std::nan("");
      row.null_risk = std::nan("");
      row.solver_path = "failed";
      row.error_message = e.what();
      row.wall_time_seconds = seconds_since(job_start);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace

SweepResult run_sweep(const SweepSpec& spec, const SweepOptions& options) {
  validate_spec(spec);
  const bool wants_hidden = std::any_of(spec.models.begin(), spec.models.end(),
                                        [](ModelKind k) { return k != ModelKind::Linear; });
  HermiteExpansion expansion;
  if (wants_hidden) expansion = make_expansion(target_fn(spec.base.activation_name), spec.base.degree_r);

  const std::size_t n_values = spec.values.size();
  const std::size_t n_jobs = n_values * static_cast<std::size_t>(spec.n_runs);
  std::vector<std::vector<SweepRow>> job_rows(n_jobs);
  std::atomic<std::size_t> next{0};
  std::atomic<int> done{0};
  std::mutex progress_mutex;

  auto worker = [&] {
    for (std::size_t job = next++; job < n_jobs; job = next++) {
      const std::size_t value_index = job / static_cast<std::size_t>(spec.n_runs);
      const int run_index = static_cast<int>(job % static_cast<std::size_t>(spec.n_runs));
      job_rows[job] = run_one(spec, value_index, run_index, expansion);
      const int finished = ++done;
      if (options.progress) {
        std::lock_guard lock(progress_mutex);
        options.progress(finished, static_cast<int>(n_jobs));
      }
    }
  };

  const int workers = std::max(1, std::min<int>(options.workers, static_cast<int>(n_jobs)));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  }

  SweepResult result;
  result.sweep_param = spec.sweep_param;
  for (auto& rows : job_rows) {
    for (auto& row : rows) result.rows.push_back(std::move(row));
  }
  return aggregate(std::move(result));
}

SweepResult aggregate(SweepResult result) {
  std::map<std::pair<double, std::string>, std::vector<std::pair<int, double>>> groups;
  for (const auto& row : result.rows) {
    auto& g = groups[{row.sweep_value, row.model}];
    if (!row.failed) g.emplace_back(row.run_index, row.icl_error);
  }
  result.aggregate.clear();
  for (auto& [key, runs] : groups) {
    if (runs.empty()) continue;  // every run of this group failed
    std::sort(runs.begin(), runs.end());
    AggregateRow agg;
    agg.sweep_value = key.first;
    agg.model = key.second;
    agg.runs = static_cast<int>(runs.size());
    double sum = 0.0;
    for (const auto& [r, e] : runs) sum += e;
    agg.mean = sum / agg.runs;
    double ss = 0.0;
    for (const auto& [r, e] : runs) ss += (e - agg.mean) * (e - agg.mean);
    agg.std = agg.runs > 1 ? std::sqrt(ss / (agg.runs - 1)) : 0.0;
    result.aggregate.push_back(std::move(agg));
  }
  return result;
}

bool SweepResult::any_failed() const {
  return std::any_of(rows.begin(), rows.end(), [](const SweepRow& r) { return r.failed; });
}

const AggregateRow& SweepResult::at(double sweep_value, std::string_view model) const {
  for (const auto& a : aggregate) {
    if (a.sweep_value == sweep_value && a.model == model) return a;
  }
  throw std::out_of_range("no aggregate for model '" + std::string(model) + "' at value " +
                          std::to_string(sweep_value));
}

std::vector<std::pair<int, double>> SweepResult::run_errors(double sweep_value, std::string_view model) const {
  std::vector<std::pair<int, double>> out;
  for (const auto& row : rows) {
    if (!row.failed && row.sweep_value == sweep_value && row.model == model) out.emplace_back(row.run_index, row.icl_error);
  }
  std::sort(out.begin(), out.end());
  return out;
}

RunPairedDifference paired_over_runs(const SweepResult& result, double sweep_value, std::string_view model_a,
                                     std::string_view model_b) {
  const auto a = result.run_errors(sweep_value, model_a);
  const auto b = result.run_errors(sweep_value, model_b);
  std::map<int, double> b_by_run(b.begin(), b.end());
  std::vector<double> diffs;
  for (const auto& [run, err] : a) {
    if (auto it = b_by_run.find(run); it != b_by_run.end()) diffs.push_back(err - it->second);
  }
  if (diffs.empty()) throw std::out_of_range("no shared runs between the two models");
  const Eigen::Map<const Eigen::VectorXd> v(diffs.data(), static_cast<Eigen::Index>(diffs.size()));
  RunPairedDifference out;
  out.runs = static_cast<int>(diffs.size());
  out.mean = v.mean();
  out.std_error = sample_stddev(v) / std::sqrt(static_cast<double>(diffs.size()));
  return out;
}

}  // namespace icl
