#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "icl/report.hpp"

using namespace icl;

namespace {

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

SweepResult two_value_result(SweepParam param, double v1, double v2) {
  SweepResult r;
  r.sweep_param = param;
  for (double v : {v1, v2}) {
    for (int run = 0; run < 3; ++run) {
      SweepRow row;
      row.sweep_value = v;
      row.model = "mlp_relu";
      row.run_index = run;
      row.icl_error = 0.5 + 0.1 * run + (v == v1 ? 0.0 : 0.3);
      row.std_error = 0.01;
      row.null_risk = 0.51;
      row.solver_path = "dual";
      r.rows.push_back(row);
    }
  }
  return aggregate(std::move(r));
}

}  // namespace

TEST_CASE("shortest round-trip doubles") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(-50, 50);
  for (int i = 0; i < 10000; ++i) {
    const double v = std::exp(u(gen)) * (i % 2 ? 1 : -1);
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1e-8) == "1e-08");
  CHECK(std::isnan(parse_double(format_double(std::nan("")))));
  CHECK(parse_double(format_double(std::numeric_limits<double>::infinity())) ==
        std::numeric_limits<double>::infinity());
  CHECK_THROWS_AS(parse_double("1.5x"), CsvFormatError);
  CHECK_THROWS_AS(parse_double(""), CsvFormatError);
}

TEST_CASE("csv round trip") {
  SweepResult r = two_value_result(SweepParam::N, 100, 200);
  r.rows[0].icl_error = 0.1 + 0.2;
  r.rows[1].wall_time_seconds = 1.25;
  const std::string text = sweep_csv(r);
  CHECK(text.rfind(std::string(kSweepCsvHeader) + "\n", 0) == 0);
  CHECK(count(text, "\n") == 1 + r.rows.size());
  const SweepCsv back = parse_sweep_csv(text);
  CHECK(back.sweep_param == "n");
  REQUIRE(back.rows.size() == r.rows.size());
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    CHECK(back.rows[i].sweep_value == r.rows[i].sweep_value);
    CHECK(back.rows[i].icl_error == r.rows[i].icl_error);
    CHECK(back.rows[i].std_error == r.rows[i].std_error);
    CHECK(back.rows[i].null_risk == r.rows[i].null_risk);
    CHECK(back.rows[i].model == r.rows[i].model);
    CHECK(back.rows[i].run_index == r.rows[i].run_index);
  }
  // Timings are only written on request.
  CHECK(back.rows[1].wall_time_seconds == 0.0);
  CHECK(parse_sweep_csv(sweep_csv(r, {true})).rows[1].wall_time_seconds == 1.25);
  CHECK(sweep_csv(r) == sweep_csv(r));
}

TEST_CASE("malformed csv") {
  const std::string h(kSweepCsvHeader);
  CHECK_THROWS_AS(parse_sweep_csv(""), CsvFormatError);
  CHECK_THROWS_AS(parse_sweep_csv("a,b,c\n"), CsvFormatError);
  CHECK_THROWS_AS(parse_sweep_csv(h + "\n"), CsvFormatError);
  CHECK_THROWS_AS(parse_sweep_csv(h + "\nn,1,lin,0,0.5,0.1,0.5,dual\n"), CsvFormatError);
  CHECK_THROWS_AS(parse_sweep_csv(h + "\nn,1,lin,zero,0.5,0.1,0.5,dual,0\n"), CsvFormatError);
  CHECK_THROWS_AS(parse_sweep_csv(h + "\nq,1,lin,0,0.5,0.1,0.5,dual,0\n"), CsvFormatError);
  CHECK_THROWS_AS(parse_sweep_csv(h + "\nn,1,lin,0,0.5,0.1,0.5,dual,0\nm,1,lin,0,0.5,0.1,0.5,dual,0\n"),
                  CsvFormatError);
  CHECK_NOTHROW(parse_sweep_csv(h + "\r\nn,1,lin,0,0.5,0.1,0.5,dual,0\r\n"));
}

TEST_CASE("svg: one model and two values give one two-vertex polyline") {
  const SweepCsv csv = parse_sweep_csv(sweep_csv(two_value_result(SweepParam::N, 100, 200)));
  const std::string svg = render_sweep_svg(csv, "test");
  CHECK(svg.rfind("<svg xmlns=\"http://www.w3.org/2000/svg\"", 0) == 0);
  CHECK(count(svg, "<polyline") == 1);
  const std::size_t at = svg.find("points=\"");
  const std::string pts = svg.substr(at + 8, svg.find('"', at + 8) - at - 8);
  CHECK(count(pts, ",") == 2);
  CHECK(count(pts, " ") == 1);
  CHECK(svg.find("(log scale)") == std::string::npos);
  CHECK(render_sweep_svg(csv, "test") == svg);
}

TEST_CASE("svg: lambda sweeps use a log axis") {
  const SweepCsv csv = parse_sweep_csv(sweep_csv(two_value_result(SweepParam::Lambda, 1e-8, 1e-2)));
  const std::string svg = render_sweep_svg(csv);
  CHECK(svg.find("(log scale)") != std::string::npos);
  CHECK(svg.find(">1e-8<") != std::string::npos);
  CHECK(svg.find(">1e-2<") != std::string::npos);
  // Decades are evenly spaced: 1e-5 sits halfway between the end points.
  CHECK(svg.find(">1e-5<") != std::string::npos);
}

TEST_CASE("atomic writes") {
  const auto path = std::filesystem::temp_directory_path() / "icl_report_atomic.txt";
  write_file_atomic(path, "hello\n");
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  CHECK(ss.str() == "hello\n");
  CHECK_FALSE(std::filesystem::exists(path.string() + ".tmp"));
  std::filesystem::remove(path);
  CHECK_THROWS(write_file_atomic("/nonexistent-dir/x/y.txt", "z"));
}

TEST_CASE("tables") {
  const HermiteExpansion e = make_expansion([](double x) { return x > 0 ? x : 0.0; }, 4);
  const std::string t = coefficient_table("relu", e);
  CHECK(t.find("   1      0.5000000000") != std::string::npos);
  CHECK(t.find("   3      0.0000000000") != std::string::npos);
  CHECK(t.find("residual c_r* = 0.0680") != std::string::npos);

  const std::vector<DiagnosticRecord> rec{{"null_risk", 0.51, 10000, 80, 80}, {"lemma1_sd", 0.4, 2000, 80, 80}};
  const std::string csv = diagnostics_csv(rec);
  CHECK(csv == "metric,value,N,d,ell\nnull_risk,0.51,10000,80,80\nlemma1_sd,0.4,2000,80,80\n");
  const std::string table = diagnostics_table(rec);
  CHECK(count(table, "\n") == 3);
}
