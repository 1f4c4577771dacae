#include "icl/config.hpp"

#include <array>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "icl/ridge.hpp"
#include "icl/task_data.hpp"

namespace icl {

namespace {

constexpr std::array<std::pair<Purpose, std::string_view>, 6> kPurposeTags{{
    {Purpose::Task, "task"},
    {Purpose::Prompt, "prompt"},
    {Purpose::Features, "features"},
    {Purpose::SurrogateNoise, "surrogate_noise"},
    {Purpose::Calibration, "calibration"},
    {Purpose::Test, "test"},
}};

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001B3ULL;
  }
  return h;
}

}  // namespace

std::string_view purpose_tag(Purpose purpose) {
  for (const auto& [p, tag] : kPurposeTags) {
    if (p == purpose) return tag;
  }
  return "unknown";
}

std::optional<Purpose> parse_purpose(std::string_view tag) {
  for (const auto& [p, name] : kPurposeTags) {
    if (name == tag) return p;
  }
  return std::nullopt;
}

RngStream::RngStream(std::uint64_t master_seed, Purpose purpose, std::uint64_t index)
    : RngStream(StreamProvenance{master_seed, purpose, index, {}},
                mix64(mix64(master_seed, fnv1a(purpose_tag(purpose))), index)) {}

RngStream::RngStream(StreamProvenance provenance, std::uint64_t key)
    : provenance_(std::move(provenance)), key_(key), engine_(mix64(key)) {}

RngStream RngStream::substream(std::uint64_t index) const {
  StreamProvenance child = provenance_;
  child.path.push_back(index);
  return RngStream(std::move(child), mix64(key_ ^ 0xD1B54A32D192ED03ULL, index));
}

RngStream derive_stream(std::uint64_t master_seed, Purpose purpose, std::uint64_t index) {
  return RngStream(master_seed, purpose, index);
}

double ExperimentConfig::lambda_eff() const { return effective_lambda(lambda, n, d); }

ConfigError::ConfigError(const std::string& message, std::vector<std::string> fields)
    : std::invalid_argument(message), fields_(std::move(fields)) {}

ExperimentConfig validate_config(const ExperimentConfig& cfg) {
  std::vector<std::string> bad;
  std::ostringstream msg;
  auto fail = [&](const char* field, const std::string& why) {
    bad.emplace_back(field);
    msg << (bad.size() == 1 ? "" : "; ") << field << ": " << why;
  };
  auto positive = [&](const char* field, int value) {
    if (value < 1) fail(field, "must be >= 1, got " + std::to_string(value));
  };
  positive("d", cfg.d);
  positive("ell", cfg.ell);
  positive("k", cfg.k);
  positive("n", cfg.n);
  positive("m", cfg.m);
  positive("n_test", cfg.n_test);
  positive("n_cal", cfg.n_cal);
  positive("n_runs", cfg.n_runs);
  if (cfg.k >= 1 && cfg.n >= 1 && cfg.k > cfg.n) fail("k", "must not exceed n");
  if (!(cfg.rho >= 0.0)) fail("rho", "must be >= 0");
  if (!(cfg.lambda >= 0.0)) fail("lambda", "must be >= 0");
  if (cfg.degree_r < 0) fail("degree_r", "must be >= 0");
  if (!is_known_activation(cfg.target_name)) fail("target_name", "unknown function '" + cfg.target_name + "'");
  if (!is_known_activation(cfg.activation_name)) {
    fail("activation_name", "unknown function '" + cfg.activation_name + "'");
  }
  if (!bad.empty()) throw ConfigError("invalid config: " + msg.str(), std::move(bad));
  return cfg;
}

namespace {

using nlohmann::json;

template <class T>
void read_field(const json& doc, const char* key, T& out, std::vector<std::string>& bad) {
  auto it = doc.find(key);
  if (it == doc.end()) return;
  try {
    if constexpr (std::is_same_v<T, int>) {
      if (!it->is_number_integer()) throw std::invalid_argument("expected integer");
      const auto v = it->get<long long>();
      if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) {
        throw std::invalid_argument("out of range");
      }
      out = static_cast<int>(v);
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!it->is_number_unsigned()) throw std::invalid_argument("expected non-negative integer");
      out = it->get<std::uint64_t>();
    } else if constexpr (std::is_same_v<T, double>) {
      if (!it->is_number()) throw std::invalid_argument("expected number");
      out = it->get<double>();
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!it->is_boolean()) throw std::invalid_argument("expected boolean");
      out = it->get<bool>();
    } else {
      if (!it->is_string()) throw std::invalid_argument("expected string");
      out = it->get<std::string>();
    }
  } catch (const std::exception&) {
    bad.emplace_back(key);
  }
}

constexpr std::array<std::string_view, 16> kConfigKeys{
    "d",          "ell",         "k",           "n",
    "m",          "rho",         "lambda",      "target_name",
    "activation_name", "degree_r", "master_seed", "n_test",
    "n_cal",      "n_runs",      "train_query_noise", "freeze_surrogate_noise",
};

}  // namespace

ExperimentConfig config_from_json_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what(), {});
  }
  if (!doc.is_object()) throw ConfigError("config must be a JSON object", {});

  std::vector<std::string> unknown;
  for (const auto& [key, value] : doc.items()) {
    if (std::find(kConfigKeys.begin(), kConfigKeys.end(), key) == kConfigKeys.end()) {
      unknown.push_back(key);
    }
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config key(s):";
    for (const auto& k : unknown) msg += " " + k;
    throw ConfigError(msg, unknown);
  }

  ExperimentConfig cfg;
  std::vector<std::string> bad;
  read_field(doc, "d", cfg.d, bad);
  read_field(doc, "ell", cfg.ell, bad);
  read_field(doc, "k", cfg.k, bad);
  read_field(doc, "n", cfg.n, bad);
  read_field(doc, "m", cfg.m, bad);
  read_field(doc, "rho", cfg.rho, bad);
  read_field(doc, "lambda", cfg.lambda, bad);
  read_field(doc, "target_name", cfg.target_name, bad);
  read_field(doc, "activation_name", cfg.activation_name, bad);
  read_field(doc, "degree_r", cfg.degree_r, bad);
  read_field(doc, "master_seed", cfg.master_seed, bad);
  read_field(doc, "n_test", cfg.n_test, bad);
  read_field(doc, "n_cal", cfg.n_cal, bad);
  read_field(doc, "n_runs", cfg.n_runs, bad);
  read_field(doc, "train_query_noise", cfg.train_query_noise, bad);
  read_field(doc, "freeze_surrogate_noise", cfg.freeze_surrogate_noise, bad);
  if (!bad.empty()) {
    std::string msg = "wrongly typed config value(s):";
    for (const auto& k : bad) msg += " " + k;
    throw ConfigError(msg, bad);
  }
  return validate_config(cfg);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string(), {});
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_json_text(buf.str());
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  json doc = {
      {"d", cfg.d},
      {"ell", cfg.ell},
      {"k", cfg.k},
      {"n", cfg.n},
      {"m", cfg.m},
      {"rho", cfg.rho},
      {"lambda", cfg.lambda},
      {"target_name", cfg.target_name},
      {"activation_name", cfg.activation_name},
      {"degree_r", cfg.degree_r},
      {"master_seed", cfg.master_seed},
      {"n_test", cfg.n_test},
      {"n_cal", cfg.n_cal},
      {"n_runs", cfg.n_runs},
      {"train_query_noise", cfg.train_query_noise},
      {"freeze_surrogate_noise", cfg.freeze_surrogate_noise},
  };
  return doc.dump(2);
}

int resolve_worker_count(std::optional<int> requested) {
  if (requested) {
    if (*requested < 1) throw ConfigError("--threads must be a positive integer", {"threads"});
    return *requested;
  }
  if (const char* env = std::getenv("ICL_LAB_THREADS"); env != nullptr && *env != '\0') {
    int value = 0;
    const std::string_view s(env);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || value < 1) {
      throw ConfigError("ICL_LAB_THREADS must be a positive integer", {"ICL_LAB_THREADS"});
    }
    return value;
  }
  return 1;
}

}  // namespace icl
