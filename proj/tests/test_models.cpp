#include <doctest.h>

#include <filesystem>
#include <memory>

#include "icl/evaluation.hpp"
#include "icl/models.hpp"
#include "test_support.hpp"

using namespace icl;
using icl::testing::check_optimal;

namespace {

ExperimentConfig small_cfg() {
  ExperimentConfig cfg;
  cfg.d = 4;
  cfg.ell = 6;
  cfg.k = 3;
  cfg.n = 30;
  cfg.m = 25;
  cfg.rho = 0.01;
  cfg.lambda = 1e-3;
  cfg.n_cal = 500;
  cfg.n_test = 200;
  return validate_config(cfg);
}

FeatureMatrixPtr features_for(const ExperimentConfig& cfg, std::uint64_t seed = 1) {
  const double t = calibrate_trace(RngStream(seed, Purpose::Calibration, 0), cfg);
  RngStream fs(seed, Purpose::Features, 0);
  return std::make_shared<const RandomFeatureMatrix>(sample_feature_matrix(fs, cfg.feature_dim(), cfg.m, t));
}

struct Fixture {
  ExperimentConfig cfg = small_cfg();
  TrainingSet train = build_dataset(RngStream(3, Purpose::Task, 0), cfg);
  Eigen::MatrixXd phis = build_h_batch(train.prompts, cfg.d, cfg.ell);
  Eigen::VectorXd y = train.query_labels();
  FeatureMatrixPtr F = features_for(cfg);
};

}  // namespace

TEST_CASE("linear fit: zero targets, optimality, perturbations") {
  Fixture fx;
  const LinearModel zero = fit_linear(fx.phis, Eigen::VectorXd::Zero(fx.cfg.n), fx.cfg);
  CHECK(zero.gamma_vec.isZero(0.0));

  const LinearModel lin = fit_linear(fx.train, fx.cfg);
  check_optimal(fx.phis, fx.y, fx.cfg.lambda_eff(), lin.gamma_vec);
  const RidgeProblem prob{fx.phis, fx.y, fx.cfg.lambda_eff()};
  const double best = ridge_objective(prob, lin.gamma_vec);
  CHECK(best <= ridge_objective(prob, Eigen::VectorXd::Zero(fx.cfg.feature_dim())));
  RngStream s(8, Purpose::Test, 0);
  for (int k = 0; k < 10; ++k) {
    Eigen::VectorXd delta(fx.cfg.feature_dim());
    for (Eigen::Index i = 0; i < delta.size(); ++i) delta(i) = 1e-3 * s.normal();
    CHECK(best <= ridge_objective(prob, lin.gamma_vec + delta));
  }
}

TEST_CASE("one-sample interpolation") {
  ExperimentConfig cfg = small_cfg();
  cfg.n = 1;
  cfg.k = 1;
  cfg.lambda = 0.0;
  const TrainingSet train = build_dataset(RngStream(5, Purpose::Task, 0), cfg);
  const LinearModel lin = fit_linear(train, cfg);
  const FeatureVector phi = build_h(train.prompts[0], cfg.d, cfg.ell);
  CHECK(predict_linear(lin, phi) == doctest::Approx(train.prompts[0].query_y).epsilon(1e-10));
  const Eigen::MatrixXd X = phi.values.transpose();
  check_optimal(X, train.query_labels(), 0.0, lin.gamma_vec);
}

TEST_CASE("linear predictions on zero inputs") {
  LinearModel zero{Eigen::VectorXd::Zero(20), SolverPath::Primal};
  FeatureVector phi{Eigen::VectorXd::LinSpaced(20, 0, 1)};
  CHECK(predict_linear(zero, phi) == 0.0);
  LinearModel lin{Eigen::VectorXd::Ones(20), SolverPath::Primal};
  CHECK(predict_linear(lin, FeatureVector{Eigen::VectorXd::Zero(20)}) == 0.0);
}

TEST_CASE("mlp fit: zero targets and optimality") {
  Fixture fx;
  const MlpModel zero = fit_mlp_preactivated(hidden_preactivations(*fx.F, fx.phis), Eigen::VectorXd::Zero(fx.cfg.n),
                                             fx.F, fx.cfg);
  CHECK(zero.w.isZero(0.0));

  const MlpModel mlp = fit_mlp(fx.train, fx.F, fx.cfg);
  CHECK(mlp.features_checksum == fx.F->checksum);
  const Eigen::MatrixXd design = activation_design(hidden_preactivations(*fx.F, fx.phis), target_fn("relu"));
  check_optimal(design, fx.y, fx.cfg.lambda_eff(), mlp.w);
  const RidgeProblem prob{design, fx.y, fx.cfg.lambda_eff()};
  const double best = ridge_objective(prob, mlp.w);
  CHECK(best <= ridge_objective(prob, Eigen::VectorXd::Zero(fx.cfg.m)));
  RngStream s(9, Purpose::Test, 0);
  for (int k = 0; k < 10; ++k) {
    Eigen::VectorXd delta(fx.cfg.m);
    for (Eigen::Index i = 0; i < delta.size(); ++i) delta(i) = 1e-3 * s.normal();
    CHECK(best <= ridge_objective(prob, mlp.w + delta));
  }
}

TEST_CASE("identity mlp is linear regression on projected features") {
  Fixture fx;
  fx.cfg.activation_name = "identity";
  const MlpModel mlp = fit_mlp(fx.train, fx.F, fx.cfg);
  const Eigen::MatrixXd projected = hidden_preactivations(*fx.F, fx.phis);
  const RidgeSolution ref = solve_ridge({projected, fx.y, fx.cfg.lambda_eff()});
  check_optimal(projected, fx.y, fx.cfg.lambda_eff(), ref.weights);
  const TestSet test = draw_test_set(fx.cfg, RngStream(4, Purpose::Test, 0), 50);
  const Eigen::VectorXd a = predict_batch(mlp, test.phis, RngStream(0, Purpose::SurrogateNoise, 0));
  const Eigen::VectorXd b = hidden_preactivations(*fx.F, test.phis) * ref.weights;
  CHECK((a - b).norm() <= 1e-8 * b.norm());
}

TEST_CASE("identity mlp matches the linear model's training predictions when both interpolate") {
  ExperimentConfig cfg = small_cfg();
  cfg.n = 12;  // n < min(p, m)
  cfg.m = 40;  // m >= p = 20
  cfg.lambda = 1e-12;
  cfg.activation_name = "identity";
  const TrainingSet train = build_dataset(RngStream(6, Purpose::Task, 0), cfg);
  const FeatureMatrixPtr F = features_for(cfg, 6);
  const LinearModel lin = fit_linear(train, cfg);
  const MlpModel mlp = fit_mlp(train, F, cfg);
  const Eigen::MatrixXd phis = build_h_batch(train.prompts, cfg.d, cfg.ell);
  const Eigen::VectorXd a = predict_batch(lin, phis, RngStream(0, Purpose::SurrogateNoise, 0));
  const Eigen::VectorXd b = predict_batch(mlp, phis, RngStream(0, Purpose::SurrogateNoise, 0));
  CHECK((a - b).norm() <= 1e-4 * a.norm());
  check_optimal(phis, train.query_labels(), cfg.lambda_eff(), lin.gamma_vec);
  check_optimal(hidden_preactivations(*F, phis), train.query_labels(), cfg.lambda_eff(), mlp.w);
}

TEST_CASE("mlp prediction edge cases") {
  Fixture fx;
  MlpModel m;
  m.w = Eigen::VectorXd::Zero(fx.cfg.m);
  m.activation_name = "relu";
  m.features = fx.F;
  m.features_checksum = fx.F->checksum;
  FeatureVector phi{build_h(fx.train.prompts[0], fx.cfg.d, fx.cfg.ell).values};
  CHECK(predict_mlp(m, phi) == 0.0);

  // Dead units: with F = I and phi <= 0, every relu is off.
  const int p = fx.cfg.feature_dim();
  MlpModel dead;
  dead.w = Eigen::VectorXd::Ones(p);
  dead.activation_name = "relu";
  dead.features = std::make_shared<const RandomFeatureMatrix>(make_feature_matrix(Eigen::MatrixXd::Identity(p, p), 1.0));
  dead.features_checksum = dead.features->checksum;
  CHECK(predict_mlp(dead, FeatureVector{-Eigen::VectorXd::LinSpaced(p, 0.1, 2.0)}) == 0.0);

  MlpModel stale = dead;
  stale.features_checksum ^= 1;
  CHECK_THROWS(predict_mlp(stale, phi));
}

TEST_CASE("surrogate without residual equals the polynomial mlp") {
  register_activation("he2_test", [](double x) { return x * x - 1.0; });
  Fixture fx;
  fx.cfg.activation_name = "he2_test";
  const HermiteExpansion exp = make_expansion(target_fn("he2_test"), 2);
  REQUIRE(exp.residual < 1e-7);
  const Eigen::MatrixXd pre = hidden_preactivations(*fx.F, fx.phis);
  const Eigen::MatrixXd a = surrogate_design(pre, exp, RngStream(1, Purpose::SurrogateNoise, 0));
  const Eigen::MatrixXd b = activation_design(pre, target_fn("he2_test"));
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-10 * (1.0 + b.cwiseAbs().maxCoeff()));

  const SurrogateModel zero = fit_surrogate_preactivated(pre, Eigen::VectorXd::Zero(fx.cfg.n), fx.F, exp, fx.cfg,
                                                         RngStream(1, Purpose::SurrogateNoise, 0));
  CHECK(zero.w.isZero(0.0));
}

TEST_CASE("identity surrogate predicts like the identity mlp") {
  Fixture fx;
  fx.cfg.activation_name = "identity";
  const HermiteExpansion exp = make_expansion(target_fn("identity"), 3);
  const SurrogateModel s = fit_surrogate(fx.train, fx.F, exp, fx.cfg, RngStream(2, Purpose::SurrogateNoise, 0));
  const MlpModel m = fit_mlp(fx.train, fx.F, fx.cfg);
  CHECK((s.w - m.w).norm() <= 1e-8 * m.w.norm());
  RngStream noise(5, Purpose::SurrogateNoise, 0);
  for (int j = 0; j < 5; ++j) {
    FeatureVector phi{build_h(fx.train.prompts[static_cast<std::size_t>(j)], fx.cfg.d, fx.cfg.ell).values};
    CHECK(predict_surrogate(s, phi, noise) == doctest::Approx(predict_mlp(m, phi)).epsilon(1e-10));
  }
  SurrogateModel z = s;
  z.w.setZero();
  FeatureVector phi{build_h(fx.train.prompts[0], fx.cfg.d, fx.cfg.ell).values};
  CHECK(predict_surrogate(z, phi, noise) == 0.0);
}

TEST_CASE("surrogate prediction noise has variance c_r*^2 ||w||^2") {
  Fixture fx;
  const HermiteExpansion exp = make_expansion(target_fn("relu"), 4);
  const SurrogateModel s = fit_surrogate(fx.train, fx.F, exp, fx.cfg, RngStream(2, Purpose::SurrogateNoise, 0));
  const Eigen::MatrixXd design =
      surrogate_design(hidden_preactivations(*fx.F, fx.phis), exp, RngStream(2, Purpose::SurrogateNoise, 0));
  check_optimal(design, fx.y, fx.cfg.lambda_eff(), s.w);

  FeatureVector phi{build_h(fx.train.prompts[0], fx.cfg.d, fx.cfg.ell).values};
  RngStream noise(6, Purpose::SurrogateNoise, 0);
  const int N = 10000;
  Eigen::VectorXd out(N);
  for (int r = 0; r < N; ++r) out(r) = predict_surrogate(s, phi, noise);
  const double var = sample_stddev(out) * sample_stddev(out);
  const double want = exp.residual * exp.residual * s.w.squaredNorm();
  CHECK(std::abs(var - want) < 0.1 * want);
}

TEST_CASE("frozen surrogate noise is reused") {
  Fixture fx;
  fx.cfg.freeze_surrogate_noise = true;
  const HermiteExpansion exp = make_expansion(target_fn("relu"), 4);
  const SurrogateModel s = fit_surrogate(fx.train, fx.F, exp, fx.cfg, RngStream(2, Purpose::SurrogateNoise, 0));
  REQUIRE(s.frozen_noise.size() == fx.cfg.m);
  FeatureVector phi{build_h(fx.train.prompts[0], fx.cfg.d, fx.cfg.ell).values};
  RngStream noise(6, Purpose::SurrogateNoise, 0);
  CHECK(predict_surrogate(s, phi, noise) == predict_surrogate(s, phi, noise));
}

TEST_CASE("batched predictions match single predictions") {
  Fixture fx;
  const TestSet test = draw_test_set(fx.cfg, RngStream(4, Purpose::Test, 0), 20);
  const LinearModel lin = fit_linear(fx.train, fx.cfg);
  const MlpModel mlp = fit_mlp(fx.train, fx.F, fx.cfg);
  const HermiteExpansion exp = make_expansion(target_fn("relu"), 4);
  const SurrogateModel sur = fit_surrogate(fx.train, fx.F, exp, fx.cfg, RngStream(2, Purpose::SurrogateNoise, 0));
  const RngStream noise(7, Purpose::SurrogateNoise, 1);
  const Eigen::VectorXd bl = predict_batch(lin, test.phis, noise);
  const Eigen::VectorXd bm = predict_batch(mlp, test.phis, noise);
  const Eigen::VectorXd bs = predict_batch(sur, test.phis, noise);
  for (int j = 0; j < 20; ++j) {
    FeatureVector phi{test.phis.row(j).transpose()};
    CHECK(bl(j) == doctest::Approx(predict_linear(lin, phi)).epsilon(1e-12));
    CHECK(bm(j) == doctest::Approx(predict_mlp(mlp, phi)).epsilon(1e-10));
    RngStream rs = noise.substream(static_cast<std::uint64_t>(j));
    CHECK(bs(j) == doctest::Approx(predict_surrogate(sur, phi, rs)).epsilon(1e-10));
  }
  CHECK(model_label(lin) == "linear");
  CHECK(model_label(mlp) == "mlp_relu");
  CHECK(model_label(sur) == "surrogate_relu");
}

TEST_CASE("model persistence") {
  Fixture fx;
  const auto dir = std::filesystem::temp_directory_path() / "icl_models_test";
  std::filesystem::create_directories(dir);
  const ModelProvenance prov{fx.cfg.d, fx.cfg.ell, 42};
  const HermiteExpansion exp = make_expansion(target_fn("relu"), 4);
  const TrainedModel models[] = {
      fit_linear(fx.train, fx.cfg),
      fit_mlp(fx.train, fx.F, fx.cfg),
      fit_surrogate(fx.train, fx.F, exp, fx.cfg, RngStream(2, Purpose::SurrogateNoise, 0)),
  };
  const TestSet test = draw_test_set(fx.cfg, RngStream(4, Purpose::Test, 0), 10);
  for (const TrainedModel& m : models) {
    const auto path = dir / (model_label(m) + ".bin");
    save_model(path, m, prov);
    const auto [back, p] = load_model(path, fx.F);
    CHECK(p.master_seed == 42);
    CHECK(p.d == fx.cfg.d);
    CHECK(model_label(back) == model_label(m));
    CHECK(model_weights(back) == model_weights(m));
    CHECK(model_solver_path(back) == model_solver_path(m));
    const RngStream noise(1, Purpose::SurrogateNoise, 1);
    CHECK(predict_batch(back, test.phis, noise) == predict_batch(m, test.phis, noise));
  }
  const FeatureMatrixPtr other = features_for(fx.cfg, 99);
  CHECK_THROWS(load_model(dir / "mlp_relu.bin", other));
  CHECK_THROWS(load_model(dir / "mlp_relu.bin", nullptr));
  std::filesystem::remove_all(dir);
}

TEST_CASE("shape errors") {
  Fixture fx;
  ExperimentConfig wrong = fx.cfg;
  wrong.m = fx.cfg.m + 1;
  CHECK_THROWS_AS(fit_mlp(fx.train, fx.F, wrong), DimensionError);
  CHECK_THROWS_AS(fit_linear(Eigen::MatrixXd::Zero(3, 5), Eigen::VectorXd::Zero(3), fx.cfg), DimensionError);
}
