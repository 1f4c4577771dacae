#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace icl {

/// Every sampling purpose gets its own family of random streams.
enum class Purpose : std::uint8_t {
  Task,
  Prompt,
  Features,
  SurrogateNoise,
  Calibration,
  Test,
};

std::string_view purpose_tag(Purpose purpose);
std::optional<Purpose> parse_purpose(std::string_view tag);

/// splitmix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Combines two 64-bit words into one key; order-sensitive.
constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  return mix64(mix64(a) ^ (b + 0x632BE59BD9B4E019ULL + (a << 6) + (a >> 2)));
}

struct StreamProvenance {
  std::uint64_t master_seed = 0;
  Purpose purpose = Purpose::Task;
  std::uint64_t index = 0;
  /// Substream path below the root, outermost first.
  std::vector<std::uint64_t> path;
};

/// Deterministic random stream. The output sequence is a pure function of the
/// provenance, so streams can be rebuilt anywhere and never need to be shared.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, Purpose purpose, std::uint64_t index);

  double normal() { return normal_(engine_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }
  std::uint64_t next_u64() { return engine_(); }

  /// Independent child stream keyed by `index`; does not advance this stream.
  [[nodiscard]] RngStream substream(std::uint64_t index) const;

  [[nodiscard]] std::uint64_t key() const { return key_; }
  [[nodiscard]] const StreamProvenance& provenance() const { return provenance_; }

 private:
  RngStream(StreamProvenance provenance, std::uint64_t key);

  StreamProvenance provenance_;
  std::uint64_t key_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_;
};

RngStream derive_stream(std::uint64_t master_seed, Purpose purpose, std::uint64_t index);

struct ExperimentConfig {
  int d = 40;
  int ell = 40;
  int k = 20;
  int n = 2400;
  int m = 1600;
  double rho = 0.01;
  double lambda = 1e-8;
  std::string target_name = "relu";
  std::string activation_name = "relu";
  int degree_r = 4;
  std::uint64_t master_seed = 0;
  int n_test = 2000;
  int n_cal = 2000;
  int n_runs = 20;

  /// When false the training query label y_{l+1} is noiseless (sensitivity check).
  bool train_query_noise = true;
  /// When true the surrogate reuses a fixed residual-noise draw at prediction time.
  bool freeze_surrogate_noise = false;

  /// d(d+1), the length of vec(H_Z).
  [[nodiscard]] int feature_dim() const { return d * (d + 1); }
  /// lambda * n / d, the penalty actually applied by the ridge fits.
  [[nodiscard]] double lambda_eff() const;
};

class ConfigError : public std::invalid_argument {
 public:
  ConfigError(const std::string& message, std::vector<std::string> fields);
  [[nodiscard]] const std::vector<std::string>& fields() const { return fields_; }

 private:
  std::vector<std::string> fields_;
};

/// Returns `cfg` unchanged when every invariant holds. Otherwise throws a
/// ConfigError that names each offending field.
ExperimentConfig validate_config(const ExperimentConfig& cfg);

/// Parses a JSON config document. Missing keys keep their defaults; unknown
/// keys and wrongly typed values are errors. The result is validated.
ExperimentConfig config_from_json_text(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);
std::string config_to_json_text(const ExperimentConfig& cfg);

/// Worker count: explicit request, else ICL_LAB_THREADS, else 1.
int resolve_worker_count(std::optional<int> requested);

}  // namespace icl
