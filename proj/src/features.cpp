#include "icl/features.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

namespace icl {

namespace {

void check_prompt(const Prompt& prompt, int d, int ell) {
  if (prompt.context_x.rows() != d || prompt.context_x.cols() != ell || prompt.context_y.size() != ell ||
      prompt.query_x.size() != d) {
    throw DimensionError("prompt shape does not match d=" + std::to_string(d) + ", ell=" + std::to_string(ell));
  }
}

constexpr std::array<char, 8> kFeatureMagic{'I', 'C', 'L', 'F', 'E', 'A', 'T', '1'};

template <class T>
void put(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof value);
}

template <class T>
T get(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof value);
  if (!in) throw std::runtime_error("truncated feature artifact");
  return value;
}

}  // namespace

RankOneFactors h_factors(const Prompt& prompt, int d, int ell) {
  check_prompt(prompt, d, ell);
  RankOneFactors f;
  f.query_x = prompt.query_x;
  f.u.resize(d + 1);
  f.u.head(d).noalias() = (static_cast<double>(d) / ell) * (prompt.context_x * prompt.context_y);
  f.u(d) = prompt.context_y.squaredNorm() / ell;
  return f;
}

FeatureVector build_h(const Prompt& prompt, int d, int ell) {
  const RankOneFactors f = h_factors(prompt, d, ell);
  FeatureVector phi;
  phi.values.resize(static_cast<Eigen::Index>(d) * (d + 1));
  // Column-major vec of the outer product x u^T.
  for (int b = 0; b <= d; ++b) phi.values.segment(static_cast<Eigen::Index>(b) * d, d) = f.u(b) * f.query_x;
  return phi;
}

Eigen::MatrixXd build_h_batch(std::span<const Prompt> prompts, int d, int ell) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(prompts.size()), static_cast<Eigen::Index>(d) * (d + 1));
  for (std::size_t j = 0; j < prompts.size(); ++j) {
    out.row(static_cast<Eigen::Index>(j)) = build_h(prompts[j], d, ell).values.transpose();
  }
  return out;
}

double calibrate_trace(const RngStream& stream, const ExperimentConfig& cfg, const TaskVector* fixed_task) {
  if (cfg.n_cal < 100) throw std::invalid_argument("calibrate_trace needs n_cal >= 100");
  const ScalarFn target = target_fn(cfg.target_name);
  const PromptOptions options{cfg.ell, cfg.rho, true};
  double sum = 0.0;
  for (int j = 0; j < cfg.n_cal; ++j) {
    RngStream s = stream.substream(static_cast<std::uint64_t>(j));
    const TaskVector task = fixed_task != nullptr ? *fixed_task : sample_task(s, cfg.d);
    const Prompt prompt = sample_prompt(s, task, target, options);
    const RankOneFactors f = h_factors(prompt, cfg.d, cfg.ell);
    // ||vec(x u^T)||^2 = ||x||^2 ||u||^2
    sum += f.query_x.squaredNorm() * f.u.squaredNorm();
  }
  const double t = sum / cfg.n_cal;
  if (!(t > 1e-12)) {
    throw DegenerateConfigError("degenerate configuration: calibrated trace " + std::to_string(t) +
                                " <= 1e-12 (all attention features vanish)");
  }
  return t;
}

std::uint64_t checksum_matrix(const Eigen::MatrixXd& matrix) {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(matrix.rows()), static_cast<std::uint64_t>(matrix.cols()));
  const double* data = matrix.data();
  for (Eigen::Index i = 0; i < matrix.size(); ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, data + i, sizeof bits);
    h = (h ^ bits) * 0x100000001B3ULL + 0x9E3779B97F4A7C15ULL;
  }
  return mix64(h);
}

RandomFeatureMatrix sample_feature_matrix(RngStream& stream, Eigen::Index p, Eigen::Index m, double t) {
  if (p < 1 || m < 1) throw DimensionError("feature matrix needs p, m >= 1");
  if (!(t > 0.0)) throw std::invalid_argument("trace constant must be positive");
  const double sd = 1.0 / std::sqrt(t);
  Eigen::MatrixXd entries(p, m);
  double* data = entries.data();
  for (Eigen::Index i = 0; i < entries.size(); ++i) data[i] = sd * stream.normal();
  return make_feature_matrix(std::move(entries), t);
}

RandomFeatureMatrix make_feature_matrix(Eigen::MatrixXd entries, double t) {
  RandomFeatureMatrix F;
  F.checksum = checksum_matrix(entries);
  F.entries = std::move(entries);
  F.trace_constant = t;
  return F;
}

Eigen::VectorXd hidden_preactivations(const RandomFeatureMatrix& F, const FeatureVector& phi) {
  if (phi.values.size() != F.p()) throw DimensionError("feature vector length does not match F rows");
  return F.entries.transpose() * phi.values;
}

Eigen::MatrixXd hidden_preactivations(const RandomFeatureMatrix& F, const Eigen::MatrixXd& phis) {
  if (phis.cols() != F.p()) throw DimensionError("feature block width does not match F rows");
  Eigen::MatrixXd out(phis.rows(), F.m());
  out.noalias() = phis * F.entries;
  return out;
}

void save_feature_artifact(const std::filesystem::path& path, const RandomFeatureMatrix& F,
                           const FeatureArtifactHeader& header) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(kFeatureMagic.data(), kFeatureMagic.size());
    put<std::int32_t>(out, header.d);
    put<std::int32_t>(out, header.ell);
    put<std::int32_t>(out, static_cast<std::int32_t>(F.m()));
    put<std::int64_t>(out, F.p());
    put<double>(out, F.trace_constant);
    put<std::uint64_t>(out, header.master_seed);
    put<std::uint64_t>(out, F.checksum);
    out.write(reinterpret_cast<const char*>(F.entries.data()),
              static_cast<std::streamsize>(F.entries.size() * sizeof(double)));
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::pair<RandomFeatureMatrix, FeatureArtifactHeader> load_feature_artifact(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kFeatureMagic) throw std::runtime_error(path.string() + " is not a feature artifact");
  FeatureArtifactHeader h;
  h.d = get<std::int32_t>(in);
  h.ell = get<std::int32_t>(in);
  h.m = get<std::int32_t>(in);
  const auto p = get<std::int64_t>(in);
  h.trace_constant = get<double>(in);
  h.master_seed = get<std::uint64_t>(in);
  h.checksum = get<std::uint64_t>(in);
  if (h.d < 1 || h.m < 1 || p != static_cast<std::int64_t>(h.d) * (h.d + 1)) {
    throw std::runtime_error(path.string() + ": inconsistent feature artifact header");
  }
  Eigen::MatrixXd entries(p, h.m);
  in.read(reinterpret_cast<char*>(entries.data()), static_cast<std::streamsize>(entries.size() * sizeof(double)));
  if (!in) throw std::runtime_error("truncated feature artifact " + path.string());
  RandomFeatureMatrix F = make_feature_matrix(std::move(entries), h.trace_constant);
  if (F.checksum != h.checksum) throw std::runtime_error(path.string() + ": feature matrix checksum mismatch");
  return {std::move(F), h};
}

}  // namespace icl
