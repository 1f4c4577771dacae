// icl_lab: command-line front end for the ICL simulation library.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <system_error>

#include <CLI11.hpp>
#include <json.hpp>

#include "icl/config.hpp"
#include "icl/evaluation.hpp"
#include "icl/experiments.hpp"
#include "icl/features.hpp"
#include "icl/hermite.hpp"
#include "icl/models.hpp"
#include "icl/report.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kPartial = 2, kIo = 3 };

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_or_throw(const fs::path& path, std::string_view content) {
  try {
    icl::write_file_atomic(path, content);
  } catch (const std::exception& e) {
    throw IoError(e.what());
  }
}

icl::ExperimentConfig load_config_or_throw(const std::string& path) {
  std::error_code ec;
  if (!fs::exists(path, ec)) throw IoError("cannot read config " + path);
  return icl::load_config(path);
}

int cmd_coeffs(const std::string& activation, int r) {
  const icl::HermiteExpansion exp = icl::make_expansion(icl::target_fn(activation), r);
  std::cout << icl::coefficient_table(activation, exp);
  return kOk;
}

int cmd_calibrate(const std::string& config_path, std::optional<std::uint64_t> seed) {
  icl::ExperimentConfig cfg = load_config_or_throw(config_path);
  if (seed) cfg.master_seed = *seed;
  const double t = icl::calibrate_trace(icl::derive_stream(cfg.master_seed, icl::Purpose::Calibration, 0), cfg);
  const double sd =
      icl::lemma1_diagnostic(cfg, t, icl::derive_stream(cfg.master_seed, icl::Purpose::Calibration, 1), cfg.n_cal);
  std::cout << "t_hat = " << icl::format_double(t) << "\n"
            << "N_cal = " << cfg.n_cal << "\n"
            << "lemma1_sd = " << icl::format_double(sd) << "\n";
  return kOk;
}

int cmd_sweep(const std::string& preset_name, int d, std::optional<std::uint64_t> seed, std::optional<int> runs,
              const std::string& out_dir, std::optional<int> threads, const std::optional<std::string>& activation,
              bool record_timings) {
  icl::SweepSpec spec = icl::preset(preset_name, d);
  if (seed) spec.base.master_seed = *seed;
  if (runs) spec.n_runs = *runs;
  if (activation) spec.base.activation_name = *activation;
  spec.base.n_runs = spec.n_runs;
  icl::validate_spec(spec);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());

  icl::SweepOptions options;
  options.workers = icl::resolve_worker_count(threads);
  options.progress = [](int done, int total) {
    std::fprintf(stderr, "\r[%d/%d] runs done", done, total);
    if (done == total) std::fputc('\n', stderr);
    std::fflush(stderr);
  };
  const auto start = std::chrono::steady_clock::now();
  const icl::SweepResult result = icl::run_sweep(spec, options);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  const std::string stem = preset_name + "_" + std::to_string(d);
  const fs::path csv_path = fs::path(out_dir) / (stem + ".csv");
  const fs::path json_path = fs::path(out_dir) / (stem + ".json");
  write_or_throw(csv_path, icl::sweep_csv(result, {record_timings}));

  json side;
  side["software"] = {{"name", "icl_lab"}, {"version", ICL_LAB_VERSION}};
  side["preset"] = spec.name;
  side["d"] = d;
  side["sweep_param"] = std::string(icl::sweep_param_name(spec.sweep_param));
  side["values"] = spec.values;
  json models = json::array();
  for (auto k : spec.models) models.push_back(std::string(icl::model_kind_name(k)));
  side["models"] = models;
  side["width_ratios"] = spec.width_ratios;
  side["n_runs"] = spec.n_runs;
  side["base_config"] = json::parse(icl::config_to_json_text(spec.base));
  side["master_seed"] = spec.base.master_seed;
  side["workers"] = options.workers;
  json seeds = json::array();
  for (double v : spec.values) {
    json per_value = json::array();
    for (int r = 0; r < spec.n_runs; ++r) per_value.push_back(icl::run_seed(spec.base.master_seed, v, r));
    seeds.push_back({{"sweep_value", v}, {"run_seeds", per_value}});
  }
  side["run_seeds"] = seeds;
  json timings = json::array();
  json failures = json::array();
  for (const auto& row : result.rows) {
    timings.push_back({{"sweep_value", row.sweep_value},
                       {"model", row.model},
                       {"run_index", row.run_index},
                       {"wall_time_seconds", row.wall_time_seconds}});
    if (row.failed) {
      failures.push_back({{"sweep_value", row.sweep_value},
                          {"model", row.model},
                          {"run_index", row.run_index},
                          {"error", row.error_message}});
    }
  }
  side["wall_time_total_seconds"] = elapsed;
  side["wall_times"] = timings;
  side["failures"] = failures;
  write_or_throw(json_path, side.dump(2) + "\n");

  std::cout << "wrote " << csv_path.string() << " and " << json_path.string() << "\n";
  for (const auto& a : result.aggregate) {
    std::printf("%-8s %-14.6g %-22s mean %.6g  std %.3g  runs %d\n", std::string(icl::sweep_param_name(spec.sweep_param)).c_str(),
                a.sweep_value, a.model.c_str(), a.mean, a.std, a.runs);
  }
  if (result.any_failed()) {
    std::cerr << "failed runs:\n";
    for (const auto& row : result.rows) {
      if (row.failed) {
        std::cerr << "  value " << icl::format_double(row.sweep_value) << " run " << row.run_index << " ("
                  << row.model << "): " << row.error_message << "\n";
      }
    }
    return kPartial;
  }
  return kOk;
}

int cmd_plot(const std::string& csv_path, const std::string& svg_path, const std::string& title) {
  icl::SweepCsv csv;
  try {
    csv = icl::read_sweep_csv(csv_path);
  } catch (const std::system_error& e) {
    throw IoError(e.what());
  }
  const std::string svg = icl::render_sweep_svg(csv, title);
  write_or_throw(svg_path, svg);
  return kOk;
}

std::optional<icl::ModelKind> parse_model_kind(const std::string& name) {
  for (auto k : {icl::ModelKind::Linear, icl::ModelKind::Mlp, icl::ModelKind::Surrogate}) {
    if (icl::model_kind_name(k) == name) return k;
  }
  return std::nullopt;
}

int cmd_fit(const std::string& config_path, const std::string& kind_name, const std::string& out_dir,
            std::optional<std::uint64_t> seed) {
  icl::ExperimentConfig cfg = load_config_or_throw(config_path);
  if (seed) cfg.master_seed = *seed;
  const auto kind = parse_model_kind(kind_name);
  if (!kind) throw icl::ConfigError("unknown model kind '" + kind_name + "'", {"model"});
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + out_dir + ": " + ec.message());

  const std::uint64_t s = cfg.master_seed;
  const icl::TrainingSet train = icl::build_dataset(icl::derive_stream(s, icl::Purpose::Task, 0), cfg);
  const icl::ModelProvenance prov{cfg.d, cfg.ell, s};
  icl::TrainedModel model;
  if (*kind == icl::ModelKind::Linear) {
    model = icl::fit_linear(train, cfg);
  } else {
    const double t = icl::calibrate_trace(icl::derive_stream(s, icl::Purpose::Calibration, 0), cfg);
    icl::RngStream fs_stream = icl::derive_stream(s, icl::Purpose::Features, 0);
    auto F = std::make_shared<const icl::RandomFeatureMatrix>(
        icl::sample_feature_matrix(fs_stream, cfg.feature_dim(), cfg.m, t));
    icl::save_feature_artifact(fs::path(out_dir) / "features.bin", *F,
                               {cfg.d, cfg.ell, cfg.m, t, s, F->checksum});
    if (*kind == icl::ModelKind::Mlp) {
      model = icl::fit_mlp(train, F, cfg);
    } else {
      const auto exp = icl::make_expansion(icl::target_fn(cfg.activation_name), cfg.degree_r);
      model = icl::fit_surrogate(train, F, exp, cfg, icl::derive_stream(s, icl::Purpose::SurrogateNoise, 0));
    }
  }
  const fs::path model_path = fs::path(out_dir) / "model.bin";
  icl::save_model(model_path, model, prov);
  std::cout << "model " << icl::model_label(model) << " solver "
            << icl::solver_path_name(icl::model_solver_path(model)) << " -> " << model_path.string() << "\n";
  return kOk;
}

int cmd_eval(const std::string& config_path, const std::string& model_path, const std::string& features_path,
             std::optional<std::uint64_t> seed) {
  icl::ExperimentConfig cfg = load_config_or_throw(config_path);
  if (seed) cfg.master_seed = *seed;
  icl::FeatureMatrixPtr F;
  if (!features_path.empty()) {
    F = std::make_shared<const icl::RandomFeatureMatrix>(icl::load_feature_artifact(features_path).first);
  }
  auto [model, prov] = icl::load_model(model_path, F);
  if (prov.d != cfg.d || prov.ell != cfg.ell) {
    throw icl::ConfigError("model was fit with d=" + std::to_string(prov.d) + ", ell=" + std::to_string(prov.ell),
                           {"d", "ell"});
  }
  const icl::RngStream test = icl::derive_stream(cfg.master_seed, icl::Purpose::Test, 0);
  const icl::ErrorEstimate e =
      icl::icl_error(model, cfg, test, icl::derive_stream(cfg.master_seed, icl::Purpose::SurrogateNoise, 1));
  std::cout << "model = " << icl::model_label(model) << "\n"
            << "icl_error = " << icl::format_double(e.mean) << "\n"
            << "stderr = " << icl::format_double(e.std_error) << "\n"
            << "n_test = " << e.n_test << "\n";
  return kOk;
}

int cmd_diagnose(const std::string& config_path, std::optional<std::uint64_t> seed, int N,
                 const std::string& csv_out) {
  icl::ExperimentConfig cfg = load_config_or_throw(config_path);
  if (seed) cfg.master_seed = *seed;
  const std::uint64_t s = cfg.master_seed;
  std::vector<icl::DiagnosticRecord> rec;
  rec.push_back({"null_risk", icl::null_risk(cfg, icl::derive_stream(s, icl::Purpose::Test, 0), N), N, cfg.d, cfg.ell});
  const double t = icl::calibrate_trace(icl::derive_stream(s, icl::Purpose::Calibration, 0), cfg);
  rec.push_back({"trace_t", t, cfg.n_cal, cfg.d, cfg.ell});
  rec.push_back({"lemma1_sd", icl::lemma1_diagnostic(cfg, t, icl::derive_stream(s, icl::Purpose::Calibration, 1), N),
                 N, cfg.d, cfg.ell});

  // Moments of one random feature over prompts sharing a task; t is
  // calibrated conditionally on that task so the projection has unit variance.
  const icl::RngStream g = icl::derive_stream(s, icl::Purpose::Calibration, 2);
  icl::RngStream ts = g.substream(0);
  const icl::TaskVector task = icl::sample_task(ts, cfg.d);
  const double t_task = icl::calibrate_trace(icl::derive_stream(s, icl::Purpose::Calibration, 3), cfg, &task);
  icl::RngStream fs_stream = icl::derive_stream(s, icl::Purpose::Features, 0);
  const icl::RandomFeatureMatrix F = icl::sample_feature_matrix(fs_stream, cfg.feature_dim(), 1, t_task);
  const icl::MomentReport m = icl::gaussianity_diagnostic(cfg, F, task, g, N);
  rec.push_back({"feature_mean", m.mean, N, cfg.d, cfg.ell});
  rec.push_back({"feature_var", m.sample_var, N, cfg.d, cfg.ell});
  rec.push_back({"feature_skewness", m.skewness, N, cfg.d, cfg.ell});
  rec.push_back({"feature_excess_kurtosis", m.excess_kurtosis, N, cfg.d, cfg.ell});
  rec.push_back({"feature_signal_cov", m.cross_cov, N, cfg.d, cfg.ell});

  std::cout << icl::diagnostics_table(rec);
  if (!csv_out.empty()) write_or_throw(csv_out, icl::diagnostics_csv(rec));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"In-context learning simulations for linear-attention models with a random-feature head"};
  app.set_version_flag("--version", std::string(ICL_LAB_VERSION));
  app.require_subcommand(1);

  std::string activation;
  int degree = 4;
  auto* coeffs = app.add_subcommand("coeffs", "Hermite coefficients of an activation");
  coeffs->add_option("activation", activation, "relu, tanh, identity, zero")->required();
  coeffs->add_option("r", degree, "expansion degree")->required()->check(CLI::NonNegativeNumber);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  auto* calibrate = app.add_subcommand("calibrate", "Estimate the trace constant t");
  calibrate->add_option("--config", config_path, "JSON config")->required();
  calibrate->add_option("--seed", seed, "override master seed");

  std::string preset_name;
  int d = icl::kQuickScaleD;
  std::optional<int> runs;
  std::optional<int> threads;
  std::string out_dir = ".";
  std::optional<std::string> sweep_activation;
  bool record_timings = false;
  auto* sweep = app.add_subcommand("sweep", "Run a sweep preset and write CSV + JSON");
  sweep->add_option("--preset", preset_name, "fig1_relu, fig1_tanh, fig2a, fig2b, fig2c")->required();
  sweep->add_option("--d", d, "scale dimension")->check(CLI::PositiveNumber);
  sweep->add_option("--seed", seed, "master seed");
  sweep->add_option("--runs", runs, "Monte Carlo runs per value")->check(CLI::PositiveNumber);
  sweep->add_option("--out", out_dir, "output directory");
  sweep->add_option("--threads", threads, "worker threads (overrides ICL_LAB_THREADS)")->check(CLI::PositiveNumber);
  sweep->add_option("--activation", sweep_activation, "hidden activation for mlp/surrogate models");
  sweep->add_flag("--record-timings", record_timings, "write measured wall times into the CSV");

  std::string csv_in;
  std::string svg_out;
  std::string title;
  auto* plot = app.add_subcommand("plot", "Render a sweep CSV as SVG");
  plot->add_option("csv", csv_in)->required();
  plot->add_option("svg", svg_out)->required();
  plot->add_option("--title", title);

  std::string model_kind;
  auto* fit = app.add_subcommand("fit", "Fit one model and save it");
  fit->add_option("--config", config_path)->required();
  fit->add_option("--model", model_kind, "linear, mlp, surrogate")->required();
  fit->add_option("--out", out_dir);
  fit->add_option("--seed", seed);

  std::string model_path;
  std::string features_path;
  auto* eval = app.add_subcommand("eval", "ICL error of a saved model");
  eval->add_option("--config", config_path)->required();
  eval->add_option("--model-file", model_path)->required();
  eval->add_option("--features", features_path, "feature artifact for mlp/surrogate models");
  eval->add_option("--seed", seed);

  int diag_n = 10000;
  std::string diag_csv;
  auto* diagnose = app.add_subcommand("diagnose", "Null risk, trace concentration, feature Gaussianity");
  diagnose->add_option("--config", config_path)->required();
  diagnose->add_option("--seed", seed);
  diagnose->add_option("--samples", diag_n)->check(CLI::Range(2, 100000000));
  diagnose->add_option("--csv", diag_csv, "also write the table as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    if (*coeffs) return cmd_coeffs(activation, degree);
    if (*calibrate) return cmd_calibrate(config_path, seed);
    if (*sweep) {
      return cmd_sweep(preset_name, d, seed, runs, out_dir, threads, sweep_activation, record_timings);
    }
    if (*plot) return cmd_plot(csv_in, svg_out, title);
    if (*fit) return cmd_fit(config_path, model_kind, out_dir, seed);
    if (*eval) return cmd_eval(config_path, model_path, features_path, seed);
    if (*diagnose) return cmd_diagnose(config_path, seed, diag_n, diag_csv);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const icl::DegenerateConfigError& e) {
    std::cerr << "error: degenerate config: " << e.what() << "\n";
    return kUsage;
  } catch (const std::system_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
