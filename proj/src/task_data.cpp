#include "icl/task_data.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>

namespace icl {

namespace {

struct Registry {
  std::mutex mutex;
  std::map<std::string, ScalarFn, std::less<>> fns{
      {"relu", [](double x) { return x > 0.0 ? x : 0.0; }},
      {"tanh", [](double x) { return std::tanh(x); }},
      {"identity", [](double x) { return x; }},
      {"zero", [](double) { return 0.0; }},
  };
};

Registry& registry() {
  static Registry r;
  return r;
}

bool is_builtin(std::string_view name) { return name == "relu" || name == "tanh" || name == "identity" || name == "zero"; }

std::uint64_t hash_doubles(std::uint64_t h, const double* data, std::size_t count) {
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, data + i, sizeof bits);
    h = mix64(h, bits);
  }
  return h;
}

}  // namespace

UnknownFunctionError::UnknownFunctionError(std::string_view name)
    : std::invalid_argument("unknown function '" + std::string(name) + "'") {}

ScalarFn target_fn(std::string_view name) {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  auto it = r.fns.find(name);
  if (it == r.fns.end()) throw UnknownFunctionError(name);
  return it->second;
}

bool is_known_activation(std::string_view name) {
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  return r.fns.find(name) != r.fns.end();
}

void register_activation(std::string name, ScalarFn fn) {
  if (is_builtin(name)) throw std::invalid_argument("cannot replace builtin function '" + name + "'");
  if (!fn) throw std::invalid_argument("empty function for '" + name + "'");
  auto& r = registry();
  std::lock_guard lock(r.mutex);
  r.fns.insert_or_assign(std::move(name), std::move(fn));
}

Eigen::VectorXd TrainingSet::query_labels() const {
  Eigen::VectorXd y(static_cast<Eigen::Index>(prompts.size()));
  for (std::size_t j = 0; j < prompts.size(); ++j) y(static_cast<Eigen::Index>(j)) = prompts[j].query_y;
  return y;
}

std::uint64_t TrainingSet::checksum() const {
  std::uint64_t h = mix64(prompts.size(), tasks.size());
  for (const auto& t : tasks) h = hash_doubles(h, t.xi.data(), static_cast<std::size_t>(t.xi.size()));
  for (std::size_t j = 0; j < prompts.size(); ++j) {
    const auto& p = prompts[j];
    h = mix64(h, static_cast<std::uint64_t>(task_of[j]));
    h = hash_doubles(h, p.context_x.data(), static_cast<std::size_t>(p.context_x.size()));
    h = hash_doubles(h, p.context_y.data(), static_cast<std::size_t>(p.context_y.size()));
    h = hash_doubles(h, p.query_x.data(), static_cast<std::size_t>(p.query_x.size()));
    h = hash_doubles(h, &p.query_y, 1);
  }
  return h;
}

TaskVector sample_task(RngStream& stream, int d) {
  TaskVector task{Eigen::VectorXd(d)};
  for (int i = 0; i < d; ++i) task.xi(i) = stream.normal();
  return task;
}

Prompt sample_prompt(RngStream& stream, const TaskVector& task, const ScalarFn& target,
                     const PromptOptions& options) {
  const auto d = task.xi.size();
  const int ell = options.ell;
  const double x_scale = 1.0 / std::sqrt(static_cast<double>(d));
  const double noise_sd = std::sqrt(options.rho);

  Prompt p;
  p.context_x.resize(d, ell);
  p.context_y.resize(ell);
  p.query_x.resize(d);
  for (int i = 0; i < ell; ++i) {
    for (Eigen::Index a = 0; a < d; ++a) p.context_x(a, i) = x_scale * stream.normal();
    p.context_y(i) = target(task.xi.dot(p.context_x.col(i))) + noise_sd * stream.normal();
  }
  for (Eigen::Index a = 0; a < d; ++a) p.query_x(a) = x_scale * stream.normal();
  // The noise draw is consumed either way so that toggling query_noise leaves
  // every other number in the prompt unchanged.
  const double eps = noise_sd * stream.normal();
  p.query_y = target(task.xi.dot(p.query_x)) + (options.query_noise ? eps : 0.0);
  return p;
}

Prompt sample_prompt(RngStream& stream, const TaskVector& task, const ExperimentConfig& cfg) {
  return sample_prompt(stream, task, target_fn(cfg.target_name), PromptOptions{cfg.ell, cfg.rho, true});
}

TrainingSet build_dataset(const RngStream& stream, const ExperimentConfig& cfg) {
  const ScalarFn target = target_fn(cfg.target_name);
  TrainingSet set;
  set.tasks.reserve(static_cast<std::size_t>(cfg.k));
  RngStream task_stream = stream.substream(0);
  for (int t = 0; t < cfg.k; ++t) set.tasks.push_back(sample_task(task_stream, cfg.d));

  const PromptOptions options{cfg.ell, cfg.rho, cfg.train_query_noise};
  set.prompts.reserve(static_cast<std::size_t>(cfg.n));
  set.task_of.reserve(static_cast<std::size_t>(cfg.n));
  for (int j = 0; j < cfg.n; ++j) {
    const int t = j % cfg.k;
    RngStream prompt_stream = stream.substream(static_cast<std::uint64_t>(j) + 1);
    set.task_of.push_back(t);
    set.prompts.push_back(sample_prompt(prompt_stream, set.tasks[static_cast<std::size_t>(t)], target, options));
  }
  return set;
}

void write_dataset_csv(const TrainingSet& set, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const auto d = set.prompts.empty() ? 0 : set.prompts.front().query_x.size();
  out << "prompt_index,task_index,position";
  for (Eigen::Index a = 1; a <= d; ++a) out << ",x_" << a;
  out << ",y\n";

  char buf[32];
  auto put = [&](double v) {
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out << ',' << std::string_view(buf, static_cast<std::size_t>(end - buf));
  };
  for (std::size_t j = 0; j < set.prompts.size(); ++j) {
    const auto& p = set.prompts[j];
    const auto ell = p.context_y.size();
    for (Eigen::Index i = 0; i <= ell; ++i) {
      out << j << ',' << set.task_of[j] << ',' << (i + 1);
      for (Eigen::Index a = 0; a < d; ++a) put(i < ell ? p.context_x(a, i) : p.query_x(a));
      put(i < ell ? p.context_y(i) : p.query_y);
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

}  // namespace icl
