#include "icl/evaluation.hpp"

#include <cmath>

namespace icl {

namespace {

constexpr std::uint64_t kDerivedNoiseIndex = ~std::uint64_t{0} - 1;

}  // namespace

double sample_mean(const Eigen::VectorXd& v) { return v.size() > 0 ? v.mean() : 0.0; }

double sample_stddev(const Eigen::VectorXd& v) {
  if (v.size() < 2) return 0.0;
  const double mu = v.mean();
  return std::sqrt((v.array() - mu).square().sum() / static_cast<double>(v.size() - 1));
}

TestSet draw_test_set(const ExperimentConfig& cfg, const RngStream& stream, int count) {
  if (count < 1) throw std::invalid_argument("test set needs at least one prompt");
  const ScalarFn target = target_fn(cfg.target_name);
  const PromptOptions options{cfg.ell, cfg.rho, true};
  TestSet set;
  set.phis.resize(count, cfg.feature_dim());
  set.query_y.resize(count);
  set.query_signal.resize(count);
  for (int j = 0; j < count; ++j) {
    RngStream s = stream.substream(static_cast<std::uint64_t>(j));
    const TaskVector task = sample_task(s, cfg.d);
    const Prompt prompt = sample_prompt(s, task, target, options);
    set.phis.row(j) = build_h(prompt, cfg.d, cfg.ell).values.transpose();
    set.query_y(j) = prompt.query_y;
    set.query_signal(j) = task.xi.dot(prompt.query_x);
  }
  return set;
}

Eigen::VectorXd squared_errors(const Eigen::VectorXd& predictions, const Eigen::VectorXd& labels) {
  if (predictions.size() != labels.size()) throw DimensionError("prediction and label counts differ");
  return (labels - predictions).array().square().matrix();
}

ErrorEstimate summarize_errors(const Eigen::VectorXd& squared) {
  if (squared.size() < 1) throw std::invalid_argument("no errors to summarize");
  ErrorEstimate e;
  e.n_test = static_cast<int>(squared.size());
  e.mean = squared.mean();
  e.std_error = sample_stddev(squared) / std::sqrt(static_cast<double>(squared.size()));
  return e;
}

PairedDifference paired_difference(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  if (a.size() != b.size() || a.size() < 1) throw DimensionError("paired samples must have equal nonzero length");
  const Eigen::VectorXd diff = a - b;
  return {diff.mean(), sample_stddev(diff) / std::sqrt(static_cast<double>(diff.size()))};
}

ErrorEstimate icl_error(const TrainedModel& model, const ExperimentConfig& cfg, const RngStream& stream,
                        const RngStream& noise) {
  const TestSet test = draw_test_set(cfg, stream, cfg.n_test);
  if (model_weights(model).size() != (std::holds_alternative<LinearModel>(model) ? cfg.feature_dim() : cfg.m)) {
    throw DimensionError("model dimensions do not match the config");
  }
  return summarize_errors(squared_errors(predict_batch(model, test.phis, noise), test.query_y));
}

ErrorEstimate icl_error(const TrainedModel& model, const ExperimentConfig& cfg, const RngStream& stream) {
  return icl_error(model, cfg, stream, stream.substream(kDerivedNoiseIndex));
}

ErrorEstimate icl_error(const PromptPredictor& predictor, const ExperimentConfig& cfg, const RngStream& stream) {
  const ScalarFn target = target_fn(cfg.target_name);
  const PromptOptions options{cfg.ell, cfg.rho, true};
  Eigen::VectorXd sq(cfg.n_test);
  for (int j = 0; j < cfg.n_test; ++j) {
    RngStream s = stream.substream(static_cast<std::uint64_t>(j));
    const TaskVector task = sample_task(s, cfg.d);
    const Prompt prompt = sample_prompt(s, task, target, options);
    const double r = prompt.query_y - predictor(prompt, task);
    sq(j) = r * r;
  }
  return summarize_errors(sq);
}

double null_risk(const ExperimentConfig& cfg, const RngStream& stream, int N) {
  if (N < 1) throw std::invalid_argument("null_risk needs N >= 1");
  ExperimentConfig c = cfg;
  c.n_test = N;
  return icl_error([](const Prompt&, const TaskVector&) { return 0.0; }, c, stream).mean;
}

Eigen::VectorXd lemma1_ratios(const ExperimentConfig& cfg, double t, const RngStream& stream, int N) {
  if (N < 1) throw std::invalid_argument("lemma1 diagnostic needs N >= 1");
  if (!(t > 0.0)) throw std::invalid_argument("trace constant must be positive");
  const ScalarFn target = target_fn(cfg.target_name);
  const PromptOptions options{cfg.ell, cfg.rho, true};
  Eigen::VectorXd ratios(N);
  for (int j = 0; j < N; ++j) {
    RngStream s = stream.substream(static_cast<std::uint64_t>(j));
    const TaskVector task = sample_task(s, cfg.d);
    const Prompt prompt = sample_prompt(s, task, target, options);
    const RankOneFactors f = h_factors(prompt, cfg.d, cfg.ell);
    ratios(j) = f.query_x.squaredNorm() * f.u.squaredNorm() / t;
  }
  return ratios;
}

double lemma1_diagnostic(const ExperimentConfig& cfg, double t, const RngStream& stream, int N) {
  return sample_stddev(lemma1_ratios(cfg, t, stream, N));
}

MomentReport gaussianity_diagnostic(const ExperimentConfig& cfg, const RandomFeatureMatrix& F,
                                    const TaskVector& task, const RngStream& stream, int N) {
  if (N < 2) throw std::invalid_argument("gaussianity diagnostic needs N >= 2");
  if (F.p() != cfg.feature_dim()) throw DimensionError("feature matrix rows do not match d(d+1)");
  if (task.xi.size() != cfg.d) throw DimensionError("task length does not match d");
  const ScalarFn target = target_fn(cfg.target_name);
  const PromptOptions options{cfg.ell, cfg.rho, true};
  // f_1^T vec(x u^T) = x^T F1 u with F1 the first column reshaped d x (d+1).
  const Eigen::Map<const Eigen::MatrixXd> f1(F.entries.col(0).data(), cfg.d, cfg.d + 1);

  Eigen::VectorXd g(N);
  Eigen::VectorXd s(N);
  for (int j = 0; j < N; ++j) {
    RngStream rs = stream.substream(static_cast<std::uint64_t>(j) + 1);
    const Prompt prompt = sample_prompt(rs, task, target, options);
    const RankOneFactors fac = h_factors(prompt, cfg.d, cfg.ell);
    g(j) = fac.query_x.dot(f1 * fac.u);
    s(j) = task.xi.dot(prompt.query_x);
  }
  MomentReport rep;
  rep.mean = g.mean();
  const Eigen::ArrayXd c = g.array() - rep.mean;
  const double m2 = c.square().mean();
  const double m3 = c.cube().mean();
  const double m4 = c.square().square().mean();
  rep.sample_var = c.square().sum() / (N - 1);
  rep.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  rep.excess_kurtosis = m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0;
  rep.cross_cov = (c * (s.array() - s.mean())).sum() / (N - 1);
  return rep;
}

MomentReport gaussianity_diagnostic(const ExperimentConfig& cfg, const RandomFeatureMatrix& F,
                                    const RngStream& stream, int N) {
  RngStream ts = stream.substream(0);
  return gaussianity_diagnostic(cfg, F, sample_task(ts, cfg.d), stream, N);
}

}  // namespace icl
