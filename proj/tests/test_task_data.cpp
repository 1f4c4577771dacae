#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "icl/task_data.hpp"

using namespace icl;

TEST_CASE("builtin pointwise functions") {
  CHECK(target_fn("relu")(-2.0) == 0.0);
  CHECK(target_fn("relu")(1.5) == 1.5);
  CHECK(target_fn("tanh")(0.0) == 0.0);
  CHECK(target_fn("identity")(3.5) == 3.5);
  CHECK(target_fn("zero")(3.5) == 0.0);
  CHECK_THROWS_AS(target_fn("nope"), UnknownFunctionError);
  CHECK(is_known_activation("relu"));
  CHECK_FALSE(is_known_activation("nope"));
}

TEST_CASE("registered functions are visible and builtins are protected") {
  register_activation("square_test", [](double x) { return x * x; });
  CHECK(is_known_activation("square_test"));
  CHECK(target_fn("square_test")(3.0) == 9.0);
  CHECK_THROWS(register_activation("relu", [](double x) { return x; }));
}

TEST_CASE("task vectors") {
  RngStream s(1, Purpose::Task, 0);
  CHECK(sample_task(s, 1).xi.size() == 1);

  double acc = 0.0;
  for (int i = 0; i < 10000; ++i) acc += sample_task(s, 80).xi.squaredNorm();
  const double mean = acc / 10000.0;
  CHECK(mean >= 80 * 0.95);
  CHECK(mean <= 80 * 1.05);

  RngStream a(9, Purpose::Task, 4);
  RngStream b(9, Purpose::Task, 4);
  CHECK(sample_task(a, 10).xi == sample_task(b, 10).xi);
}

TEST_CASE("prompt shapes and the zero task") {
  RngStream s(2, Purpose::Prompt, 0);
  TaskVector zero{Eigen::VectorXd::Zero(5)};
  const Prompt p = sample_prompt(s, zero, target_fn("relu"), PromptOptions{7, 0.0, true});
  CHECK(p.context_x.rows() == 5);
  CHECK(p.context_x.cols() == 7);
  CHECK(p.context_y.size() == 7);
  CHECK(p.query_x.size() == 5);
  CHECK(p.context_y.isZero(0.0));
  CHECK(p.query_y == 0.0);
}

TEST_CASE("identity labels have unit second moment") {
  RngStream s(3, Purpose::Prompt, 0);
  double acc = 0.0;
  for (int j = 0; j < 10000; ++j) {
    const TaskVector t = sample_task(s, 80);
    const Prompt p = sample_prompt(s, t, target_fn("identity"), PromptOptions{1, 0.0, true});
    acc += p.context_y(0) * p.context_y(0);
  }
  const double m2 = acc / 10000.0;
  CHECK(m2 >= 0.9);
  CHECK(m2 <= 1.1);
}

TEST_CASE("rho is a variance") {
  RngStream s(4, Purpose::Prompt, 0);
  TaskVector zero{Eigen::VectorXd::Zero(3)};
  const int N = 100000;
  double sum = 0.0, sq = 0.0;
  for (int j = 0; j < N; ++j) {
    const Prompt p = sample_prompt(s, zero, target_fn("relu"), PromptOptions{1, 0.01, true});
    sum += p.context_y(0);
    sq += p.context_y(0) * p.context_y(0);
  }
  const double var = (sq - sum * sum / N) / (N - 1);
  CHECK(var >= 0.0095);
  CHECK(var <= 0.0105);
}

TEST_CASE("identity target: conditional residual variance equals rho") {
  RngStream s(5, Purpose::Prompt, 0);
  RngStream ts(5, Purpose::Task, 0);
  const TaskVector t = sample_task(ts, 4);
  const double rho = 0.3;
  double acc = 0.0;
  const int N = 20000;
  for (int j = 0; j < N; ++j) {
    const Prompt p = sample_prompt(s, t, target_fn("identity"), PromptOptions{1, rho, true});
    const double r = p.context_y(0) - t.xi.dot(p.context_x.col(0));
    acc += r * r;
  }
  CHECK(acc / N == doctest::Approx(rho).epsilon(0.05));
}

TEST_CASE("noise-free query option") {
  RngStream a(6, Purpose::Prompt, 0);
  RngStream b(6, Purpose::Prompt, 0);
  RngStream ts(6, Purpose::Task, 0);
  const TaskVector t = sample_task(ts, 4);
  const Prompt noisy = sample_prompt(a, t, target_fn("identity"), PromptOptions{3, 0.5, true});
  const Prompt clean = sample_prompt(b, t, target_fn("identity"), PromptOptions{3, 0.5, false});
  CHECK(noisy.context_y == clean.context_y);
  CHECK(noisy.query_x == clean.query_x);
  CHECK(clean.query_y == doctest::Approx(t.xi.dot(clean.query_x)).epsilon(1e-14));
  CHECK(noisy.query_y != clean.query_y);
}

TEST_CASE("round-robin task assignment") {
  ExperimentConfig cfg;
  cfg.d = 3;
  cfg.ell = 2;
  cfg.k = 2;
  cfg.n = 4;
  cfg.m = 2;
  const TrainingSet ts = build_dataset(RngStream(1, Purpose::Task, 0), cfg);
  // 0-based: the first task is index 0.
  CHECK(ts.task_of == std::vector<int>{0, 1, 0, 1});
  CHECK(ts.tasks.size() == 2);
  CHECK(ts.prompts.size() == 4);

  cfg.d = 4;
  cfg.ell = 2;
  cfg.k = 40;
  cfg.n = 9600;
  const TrainingSet big = build_dataset(RngStream(1, Purpose::Task, 0), cfg);
  std::vector<int> counts(40, 0);
  for (int t : big.task_of) ++counts[static_cast<std::size_t>(t)];
  for (int c : counts) CHECK(c == 240);

  cfg = ExperimentConfig{};
  cfg.d = 3;
  cfg.ell = 2;
  cfg.k = 1;
  cfg.n = 5;
  const TrainingSet one = build_dataset(RngStream(1, Purpose::Task, 0), cfg);
  for (int t : one.task_of) CHECK(t == 0);
}

TEST_CASE("dataset is a pure function of the stream") {
  ExperimentConfig cfg;
  cfg.d = 5;
  cfg.ell = 4;
  cfg.k = 3;
  cfg.n = 20;
  const TrainingSet a = build_dataset(RngStream(11, Purpose::Task, 0), cfg);
  const TrainingSet b = build_dataset(RngStream(11, Purpose::Task, 0), cfg);
  const TrainingSet c = build_dataset(RngStream(12, Purpose::Task, 0), cfg);
  CHECK(a.checksum() == b.checksum());
  CHECK(a.checksum() != c.checksum());
  CHECK(a.query_labels() == b.query_labels());
}

TEST_CASE("dataset csv dump") {
  ExperimentConfig cfg;
  cfg.d = 2;
  cfg.ell = 3;
  cfg.k = 1;
  cfg.n = 2;
  const TrainingSet ts = build_dataset(RngStream(1, Purpose::Task, 0), cfg);
  const auto path = std::filesystem::temp_directory_path() / "icl_task_data_dump.csv";
  write_dataset_csv(ts, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "prompt_index,task_index,position,x_1,x_2,y");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == cfg.n * (cfg.ell + 1));
  std::filesystem::remove(path);
}
