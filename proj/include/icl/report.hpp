#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "icl/experiments.hpp"
#include "icl/hermite.hpp"

namespace icl {

/// Column order of sweep CSV files.
inline constexpr std::string_view kSweepCsvHeader =
    "sweep_param,sweep_value,model,run_index,icl_error,stderr,null_risk,solver_path,wall_time_seconds";

class CsvFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest decimal that parses back to the same double.
std::string format_double(double value);
double parse_double(std::string_view text);

struct CsvWriteOptions {
  /// Wall times vary between runs; by default the column is written as 0 so
  /// that the file depends only on (arguments, seed). Real timings always go
  /// to the JSON sidecar.
  bool include_wall_time = false;
};

std::string sweep_csv(const SweepResult& result, const CsvWriteOptions& options = {});

struct SweepCsv {
  std::string sweep_param;
  std::vector<SweepRow> rows;
};

/// Throws CsvFormatError on a wrong header, wrong field count, unparsable
/// numbers, mixed sweep_param values, or an empty data section.
SweepCsv parse_sweep_csv(std::string_view text);
SweepCsv read_sweep_csv(const std::filesystem::path& path);

/// Line plot of mean ICL error against the sweep value, one polyline per
/// model, across-run standard deviation as error bars, log-x for lambda.
std::string render_sweep_svg(const SweepCsv& csv, std::string_view title = {});

/// Writes via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

/// Table rows for the coefficient listing: i, c_i, c_i^2/i!, cumulative
/// Parseval fraction, and the residual on the last line.
std::string coefficient_table(std::string_view activation, const HermiteExpansion& exp);

struct DiagnosticRecord {
  std::string metric;
  double value = 0.0;
  int N = 0;
  int d = 0;
  int ell = 0;
};

std::string diagnostics_table(const std::vector<DiagnosticRecord>& records);
/// Columns: metric,value,N,d,ell
std::string diagnostics_csv(const std::vector<DiagnosticRecord>& records);

}  // namespace icl
