#include "icl/models.hpp"

#include <array>
#include <fstream>

namespace icl {

namespace {

void require_features(const FeatureMatrixPtr& F, const ExperimentConfig& cfg) {
  if (!F) throw std::invalid_argument("feature matrix is null");
  if (F->p() != cfg.feature_dim()) throw DimensionError("feature matrix rows do not match d(d+1)");
  if (F->m() != cfg.m) throw DimensionError("feature matrix columns do not match m");
}

void require_same_features(const FeatureMatrixPtr& F, std::uint64_t checksum) {
  if (!F) throw std::invalid_argument("model has no feature matrix");
  if (F->checksum != checksum) throw std::logic_error("feature matrix checksum does not match the fitted model");
}

Eigen::VectorXd surrogate_row_noise(const SurrogateModel& model, RngStream& noise) {
  if (model.frozen_noise.size() > 0) return model.frozen_noise;
  Eigen::VectorXd z(model.w.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = noise.normal();
  return z;
}

double surrogate_readout(const SurrogateModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& preact,
                         const Eigen::VectorXd& z) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < preact.size(); ++i) acc += model.w(i) * surrogate_apply(model.expansion, preact(i), z(i));
  return acc;
}

}  // namespace

std::string model_label(const TrainedModel& model) {
  return std::visit(
      [](const auto& m) -> std::string {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearModel>) {
          return "linear";
        } else if constexpr (std::is_same_v<T, MlpModel>) {
          return "mlp_" + m.activation_name;
        } else {
          return "surrogate_" + m.activation_name;
        }
      },
      model);
}

Eigen::MatrixXd activation_design(const Eigen::MatrixXd& preactivations, const ScalarFn& sigma) {
  Eigen::MatrixXd out(preactivations.rows(), preactivations.cols());
  const double* src = preactivations.data();
  double* dst = out.data();
  for (Eigen::Index i = 0; i < preactivations.size(); ++i) dst[i] = sigma(src[i]);
  return out;
}

Eigen::MatrixXd surrogate_design(const Eigen::MatrixXd& preactivations, const HermiteExpansion& exp,
                                 const RngStream& noise) {
  Eigen::MatrixXd out(preactivations.rows(), preactivations.cols());
  for (Eigen::Index j = 0; j < preactivations.rows(); ++j) {
    RngStream s = noise.substream(static_cast<std::uint64_t>(j));
    for (Eigen::Index i = 0; i < preactivations.cols(); ++i) {
      out(j, i) = surrogate_apply(exp, preactivations(j, i), s.normal());
    }
  }
  return out;
}

LinearModel fit_linear(const TrainingSet& trainset, const ExperimentConfig& cfg) {
  const Eigen::MatrixXd phis = build_h_batch(trainset.prompts, cfg.d, cfg.ell);
  return fit_linear(phis, trainset.query_labels(), cfg);
}

LinearModel fit_linear(const Eigen::MatrixXd& phis, const Eigen::VectorXd& targets, const ExperimentConfig& cfg) {
  if (phis.cols() != cfg.feature_dim()) throw DimensionError("feature block width does not match d(d+1)");
  RidgeSolution sol = solve_ridge(RidgeProblem{phis, targets, cfg.lambda_eff()});
  return LinearModel{std::move(sol.weights), sol.solver_path};
}

MlpModel fit_mlp(const TrainingSet& trainset, FeatureMatrixPtr F, const ExperimentConfig& cfg) {
  require_features(F, cfg);
  const Eigen::MatrixXd preacts =
      hidden_preactivations(*F, build_h_batch(trainset.prompts, cfg.d, cfg.ell));
  return fit_mlp_preactivated(preacts, trainset.query_labels(), std::move(F), cfg);
}

MlpModel fit_mlp_preactivated(const Eigen::MatrixXd& preactivations, const Eigen::VectorXd& targets,
                              FeatureMatrixPtr F, const ExperimentConfig& cfg) {
  require_features(F, cfg);
  if (preactivations.cols() != F->m()) throw DimensionError("pre-activation width does not match m");
  const Eigen::MatrixXd design = activation_design(preactivations, target_fn(cfg.activation_name));
  RidgeSolution sol = solve_ridge(RidgeProblem{design, targets, cfg.lambda_eff()});
  MlpModel model;
  model.w = std::move(sol.weights);
  model.activation_name = cfg.activation_name;
  model.features_checksum = F->checksum;
  model.features = std::move(F);
  model.solver_path = sol.solver_path;
  return model;
}

SurrogateModel fit_surrogate(const TrainingSet& trainset, FeatureMatrixPtr F, const HermiteExpansion& exp,
                             const ExperimentConfig& cfg, const RngStream& noise) {
  require_features(F, cfg);
  const Eigen::MatrixXd preacts =
      hidden_preactivations(*F, build_h_batch(trainset.prompts, cfg.d, cfg.ell));
  return fit_surrogate_preactivated(preacts, trainset.query_labels(), std::move(F), exp, cfg, noise);
}

SurrogateModel fit_surrogate_preactivated(const Eigen::MatrixXd& preactivations, const Eigen::VectorXd& targets,
                                          FeatureMatrixPtr F, const HermiteExpansion& exp,
                                          const ExperimentConfig& cfg, const RngStream& noise) {
  require_features(F, cfg);
  if (preactivations.cols() != F->m()) throw DimensionError("pre-activation width does not match m");
  const Eigen::MatrixXd design = surrogate_design(preactivations, exp, noise);
  RidgeSolution sol = solve_ridge(RidgeProblem{design, targets, cfg.lambda_eff()});
  SurrogateModel model;
  model.w = std::move(sol.weights);
  model.activation_name = cfg.activation_name;
  model.expansion = exp;
  model.features_checksum = F->checksum;
  model.features = std::move(F);
  model.solver_path = sol.solver_path;
  if (cfg.freeze_surrogate_noise) {
    // Past every per-prompt substream index used for the design.
    RngStream s = noise.substream(~std::uint64_t{0});
    model.frozen_noise.resize(model.w.size());
    for (Eigen::Index i = 0; i < model.frozen_noise.size(); ++i) model.frozen_noise(i) = s.normal();
  }
  return model;
}

double predict_linear(const LinearModel& model, const FeatureVector& phi) {
  if (phi.values.size() != model.gamma_vec.size()) throw DimensionError("feature vector length does not match Gamma");
  return model.gamma_vec.dot(phi.values);
}

double predict_mlp(const MlpModel& model, const FeatureVector& phi) {
  require_same_features(model.features, model.features_checksum);
  const Eigen::VectorXd pre = hidden_preactivations(*model.features, phi);
  const ScalarFn sigma = target_fn(model.activation_name);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < pre.size(); ++i) acc += model.w(i) * sigma(pre(i));
  return acc;
}

double predict_surrogate(const SurrogateModel& model, const FeatureVector& phi, RngStream& noise) {
  require_same_features(model.features, model.features_checksum);
  const Eigen::VectorXd pre = hidden_preactivations(*model.features, phi);
  return surrogate_readout(model, pre.transpose(), surrogate_row_noise(model, noise));
}

Eigen::VectorXd predict_preactivated(const TrainedModel& model, const Eigen::MatrixXd& preactivations,
                                     const RngStream& noise) {
  return std::visit(
      [&](const auto& m) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearModel>) {
          throw std::logic_error("linear models have no hidden layer");
        } else {
          if (preactivations.cols() != m.w.size()) throw DimensionError("pre-activation width does not match w");
          Eigen::VectorXd out(preactivations.rows());
          if constexpr (std::is_same_v<T, MlpModel>) {
            const ScalarFn sigma = target_fn(m.activation_name);
            for (Eigen::Index j = 0; j < preactivations.rows(); ++j) {
              double acc = 0.0;
              for (Eigen::Index i = 0; i < preactivations.cols(); ++i) acc += m.w(i) * sigma(preactivations(j, i));
              out(j) = acc;
            }
          } else {
            for (Eigen::Index j = 0; j < preactivations.rows(); ++j) {
              RngStream s = noise.substream(static_cast<std::uint64_t>(j));
              out(j) = surrogate_readout(m, preactivations.row(j), surrogate_row_noise(m, s));
            }
          }
          return out;
        }
      },
      model);
}

Eigen::VectorXd predict_batch(const TrainedModel& model, const Eigen::MatrixXd& phis, const RngStream& noise) {
  if (const auto* lin = std::get_if<LinearModel>(&model)) {
    if (phis.cols() != lin->gamma_vec.size()) throw DimensionError("feature block width does not match Gamma");
    return phis * lin->gamma_vec;
  }
  const FeatureMatrixPtr& F = std::visit(
      [](const auto& m) -> const FeatureMatrixPtr& {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearModel>) {
          throw std::logic_error("unreachable");
        } else {
          require_same_features(m.features, m.features_checksum);
          return m.features;
        }
      },
      model);
  return predict_preactivated(model, hidden_preactivations(*F, phis), noise);
}

const Eigen::VectorXd& model_weights(const TrainedModel& model) {
  return std::visit(
      [](const auto& m) -> const Eigen::VectorXd& {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, LinearModel>) {
          return m.gamma_vec;
        } else {
          return m.w;
        }
      },
      model);
}

SolverPath model_solver_path(const TrainedModel& model) {
  return std::visit([](const auto& m) { return m.solver_path; }, model);
}

// ---- persistence ----------------------------------------------------------

namespace {

constexpr std::array<char, 8> kModelMagic{'I', 'C', 'L', 'M', 'O', 'D', 'L', '1'};

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}
  template <class T>
  void put(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  void put(const std::string& s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  void put(const Eigen::VectorXd& v) {
    put<std::int64_t>(v.size());
    out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  }

 private:
  std::ostream& out_;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}
  template <class T>
  T get() {
    T v{};
    in_.read(reinterpret_cast<char*>(&v), sizeof v);
    check();
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    if (n > (1u << 20)) throw std::runtime_error("corrupt model file: string too long");
    std::string s(n, '\0');
    in_.read(s.data(), n);
    check();
    return s;
  }
  Eigen::VectorXd get_vector() {
    const auto n = get<std::int64_t>();
    if (n < 0 || n > (std::int64_t{1} << 32)) throw std::runtime_error("corrupt model file: bad vector length");
    Eigen::VectorXd v(n);
    in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
    check();
    return v;
  }

 private:
  void check() {
    if (!in_) throw std::runtime_error("truncated model file");
  }
  std::istream& in_;
};

}  // namespace

void save_model(const std::filesystem::path& path, const TrainedModel& model, const ModelProvenance& provenance) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(kModelMagic.data(), kModelMagic.size());
    Writer w(out);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(model.index()));
    w.put<std::int32_t>(provenance.d);
    w.put<std::int32_t>(provenance.ell);
    w.put<std::uint64_t>(provenance.master_seed);
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          w.put<std::uint8_t>(static_cast<std::uint8_t>(m.solver_path));
          if constexpr (std::is_same_v<T, LinearModel>) {
            w.put(m.gamma_vec);
          } else if constexpr (std::is_same_v<T, MlpModel>) {
            w.put<std::uint64_t>(m.features_checksum);
            w.put(m.activation_name);
            w.put(m.w);
          } else {
            w.put<std::uint64_t>(m.features_checksum);
            w.put(m.activation_name);
            w.put<std::int32_t>(m.expansion.degree_r);
            w.put(Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(
                m.expansion.coeffs.data(), static_cast<Eigen::Index>(m.expansion.coeffs.size()))));
            w.put<double>(m.expansion.residual);
            w.put<double>(m.expansion.second_moment);
            w.put(m.w);
            w.put(m.frozen_noise);
          }
        },
        model);
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::pair<TrainedModel, ModelProvenance> load_model(const std::filesystem::path& path, FeatureMatrixPtr F) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kModelMagic) throw std::runtime_error(path.string() + " is not a model file");
  Reader r(in);
  const auto kind = r.get<std::uint8_t>();
  ModelProvenance prov;
  prov.d = r.get<std::int32_t>();
  prov.ell = r.get<std::int32_t>();
  prov.master_seed = r.get<std::uint64_t>();
  const auto path_code = r.get<std::uint8_t>();
  if (path_code > 2) throw std::runtime_error("corrupt model file: bad solver path");
  const auto solver = static_cast<SolverPath>(path_code);

  auto attach = [&](std::uint64_t checksum) {
    if (!F) throw std::invalid_argument(path.string() + " needs its feature matrix artifact");
    require_same_features(F, checksum);
    return F;
  };

  switch (kind) {
    case 0: {
      LinearModel m;
      m.solver_path = solver;
      m.gamma_vec = r.get_vector();
      return {TrainedModel{std::move(m)}, prov};
    }
    case 1: {
      MlpModel m;
      m.solver_path = solver;
      m.features_checksum = r.get<std::uint64_t>();
      m.activation_name = r.get_string();
      m.w = r.get_vector();
      m.features = attach(m.features_checksum);
      return {TrainedModel{std::move(m)}, prov};
    }
    case 2: {
      SurrogateModel m;
      m.solver_path = solver;
      m.features_checksum = r.get<std::uint64_t>();
      m.activation_name = r.get_string();
      m.expansion.degree_r = r.get<std::int32_t>();
      const Eigen::VectorXd c = r.get_vector();
      m.expansion.coeffs.assign(c.data(), c.data() + c.size());
      m.expansion.residual = r.get<double>();
      m.expansion.second_moment = r.get<double>();
      m.w = r.get_vector();
      m.frozen_noise = r.get_vector();
      m.features = attach(m.features_checksum);
      if (static_cast<int>(m.expansion.coeffs.size()) != m.expansion.degree_r + 1) {
        throw std::runtime_error("corrupt model file: coefficient count");
      }
      return {TrainedModel{std::move(m)}, prov};
    }
    default:
      throw std::runtime_error("corrupt model file: unknown model kind");
  }
}

}  // namespace icl
