#include "icl/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <system_error>


namespace icl {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

int parse_int(std::string_view text) {
  int v = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw CsvFormatError("not an integer: '" + std::string(text) + "'");
  }
  return v;
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string tick_label(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

}  // namespace

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc{}) throw std::runtime_error("double formatting failed");
  return std::string(buf, ptr);
}

double parse_double(std::string_view text) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw CsvFormatError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

std::string sweep_csv(const SweepResult& result, const CsvWriteOptions& options) {
  std::string out(kSweepCsvHeader);
  out += '\n';
  const std::string_view param = sweep_param_name(result.sweep_param);
  for (const SweepRow& r : result.rows) {
    out += param;
    out += ',';
    out += format_double(r.sweep_value);
    out += ',';
    out += r.model;
    out += ',';
    out += std::to_string(r.run_index);
    out += ',';
    out += format_double(r.icl_error);
    out += ',';
    out += format_double(r.std_error);
    out += ',';
    out += format_double(r.null_risk);
    out += ',';
    out += r.solver_path;
    out += ',';
    out += format_double(options.include_wall_time ? r.wall_time_seconds : 0.0);
    out += '\n';
  }
  return out;
}

SweepCsv parse_sweep_csv(std::string_view text) {
  SweepCsv csv;
  std::size_t pos = 0;
  int line_no = 0;
  bool header_seen = false;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      if (line != kSweepCsvHeader) throw CsvFormatError("unexpected CSV header: '" + std::string(line) + "'");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != 9) {
      throw CsvFormatError("line " + std::to_string(line_no) + ": expected 9 fields, got " + std::to_string(f.size()));
    }
    if (csv.rows.empty()) {
      if (!parse_sweep_param(f[0])) throw CsvFormatError("unknown sweep_param '" + std::string(f[0]) + "'");
      csv.sweep_param = std::string(f[0]);
    } else if (f[0] != csv.sweep_param) {
      throw CsvFormatError("line " + std::to_string(line_no) + ": mixed sweep_param values");
    }
    SweepRow r;
    try {
      r.sweep_value = parse_double(f[1]);
      r.model = std::string(f[2]);
      r.run_index = parse_int(f[3]);
      r.icl_error = parse_double(f[4]);
      r.std_error = parse_double(f[5]);
      r.null_risk = parse_double(f[6]);
      r.solver_path = std::string(f[7]);
      r.wall_time_seconds = parse_double(f[8]);
    } catch (const CsvFormatError& e) {
      throw CsvFormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (r.model.empty()) throw CsvFormatError("line " + std::to_string(line_no) + ": empty model");
    r.failed = r.solver_path == "failed" || std::isnan(r.icl_error);
    csv.rows.push_back(std::move(r));
  }
  if (!header_seen) throw CsvFormatError("missing CSV header");
  if (csv.rows.empty()) throw CsvFormatError("CSV has no data rows");
  return csv;
}

SweepCsv read_sweep_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::system_error(errno, std::generic_category(), "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_sweep_csv(ss.str());
}

std::string render_sweep_svg(const SweepCsv& csv, std::string_view title) {
  if (csv.rows.empty()) throw CsvFormatError("nothing to plot");
  SweepResult res;
  res.sweep_param = parse_sweep_param(csv.sweep_param).value_or(SweepParam::N);
  res.rows = csv.rows;
  res = aggregate(std::move(res));
  if (res.aggregate.empty()) throw CsvFormatError("no successful runs to plot");

  const bool log_x = res.sweep_param == SweepParam::Lambda;
  std::vector<std::string> models;
  for (const AggregateRow& a : res.aggregate) {
    if (std::find(models.begin(), models.end(), a.model) == models.end()) models.push_back(a.model);
  }
  std::sort(models.begin(), models.end());

  auto xval = [&](double v) { return log_x ? std::log10(v) : v; };
  double x_lo = INFINITY, x_hi = -INFINITY, y_lo = INFINITY, y_hi = -INFINITY;
  for (const AggregateRow& a : res.aggregate) {
    if (log_x && !(a.sweep_value > 0.0)) throw CsvFormatError("log axis needs positive sweep values");
    x_lo = std::min(x_lo, xval(a.sweep_value));
    x_hi = std::max(x_hi, xval(a.sweep_value));
    y_lo = std::min(y_lo, a.mean - a.std);
    y_hi = std::max(y_hi, a.mean + a.std);
  }
  y_lo = std::min(y_lo, 0.0);
  if (x_hi - x_lo <= 0.0) {
    x_lo -= 0.5;
    x_hi += 0.5;
  }
  if (y_hi - y_lo <= 0.0) y_hi = y_lo + 1.0;
  y_hi += 0.05 * (y_hi - y_lo);

  constexpr double W = 720, H = 460, L = 70, R = 190, T = 40, B = 60;
  const double pw = W - L - R, ph = H - T - B;
  auto px = [&](double v) { return L + (xval(v) - x_lo) / (x_hi - x_lo) * pw; };
  auto py = [&](double v) { return T + ph - (v - y_lo) / (y_hi - y_lo) * ph; };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(W, 0) << "\" height=\"" << fixed(H, 0)
    << "\" viewBox=\"0 0 " << fixed(W, 0) << ' ' << fixed(H, 0) << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s << "<rect x=\"0\" y=\"0\" width=\"" << fixed(W, 0) << "\" height=\"" << fixed(H, 0) << "\" fill=\"white\"/>\n";
  if (!title.empty()) {
    s << "<text x=\"" << fixed(L + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">"
      << xml_escape(title) << "</text>\n";
  }
  // Axes.
  s << "<line x1=\"" << fixed(L) << "\" y1=\"" << fixed(T + ph) << "\" x2=\"" << fixed(L + pw) << "\" y2=\""
    << fixed(T + ph) << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << fixed(L) << "\" y1=\"" << fixed(T) << "\" x2=\"" << fixed(L) << "\" y2=\"" << fixed(T + ph)
    << "\" stroke=\"black\"/>\n";

  // x ticks at the distinct sweep values (decades for log axes).
  std::vector<double> xticks;
  if (log_x) {
    for (int e = static_cast<int>(std::floor(x_lo)); e <= static_cast<int>(std::ceil(x_hi)); ++e) {
      if (e >= x_lo - 1e-9 && e <= x_hi + 1e-9) xticks.push_back(std::pow(10.0, e));
    }
  } else {
    for (const AggregateRow& a : res.aggregate) {
      if (std::find(xticks.begin(), xticks.end(), a.sweep_value) == xticks.end()) xticks.push_back(a.sweep_value);
    }
  }
  for (double v : xticks) {
    const double x = px(v);
    s << "<line x1=\"" << fixed(x) << "\" y1=\"" << fixed(T + ph) << "\" x2=\"" << fixed(x) << "\" y2=\""
      << fixed(T + ph + 5) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << fixed(x) << "\" y=\"" << fixed(T + ph + 18) << "\" text-anchor=\"middle\">"
      << (log_x ? "1e" + std::to_string(static_cast<int>(std::lround(std::log10(v)))) : tick_label(v))
      << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    const double v = y_lo + (y_hi - y_lo) * i / 5.0;
    const double y = py(v);
    s << "<line x1=\"" << fixed(L - 5) << "\" y1=\"" << fixed(y) << "\" x2=\"" << fixed(L) << "\" y2=\""
      << fixed(y) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"" << fixed(L - 8) << "\" y=\"" << fixed(y + 4) << "\" text-anchor=\"end\">" << tick_label(v)
      << "</text>\n";
  }
  s << "<text x=\"" << fixed(L + pw / 2) << "\" y=\"" << fixed(H - 15) << "\" text-anchor=\"middle\">"
    << xml_escape(csv.sweep_param) << (log_x ? " (log scale)" : "") << "</text>\n";
  s << "<text x=\"18\" y=\"" << fixed(T + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << fixed(T + ph / 2) << ")\">ICL error</text>\n";

  for (std::size_t k = 0; k < models.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    std::vector<const AggregateRow*> pts;
    for (const AggregateRow& a : res.aggregate) {
      if (a.model == models[k]) pts.push_back(&a);
    }
    std::sort(pts.begin(), pts.end(),
              [](const AggregateRow* a, const AggregateRow* b) { return a->sweep_value < b->sweep_value; });
    s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      if (i) s << ' ';
      s << fixed(px(pts[i]->sweep_value)) << ',' << fixed(py(pts[i]->mean));
    }
    s << "\"/>\n";
    for (const AggregateRow* a : pts) {
      const double x = px(a->sweep_value);
      if (a->std > 0.0) {
        s << "<line x1=\"" << fixed(x) << "\" y1=\"" << fixed(py(a->mean - a->std)) << "\" x2=\"" << fixed(x)
          << "\" y2=\"" << fixed(py(a->mean + a->std)) << "\" stroke=\"" << color << "\"/>\n";
      }
      s << "<circle cx=\"" << fixed(x) << "\" cy=\"" << fixed(py(a->mean)) << "\" r=\"2.5\" fill=\"" << color
        << "\"/>\n";
    }
    const double ly = T + 10 + 18.0 * static_cast<double>(k);
    s << "<line x1=\"" << fixed(L + pw + 15) << "\" y1=\"" << fixed(ly) << "\" x2=\"" << fixed(L + pw + 35)
      << "\" y2=\"" << fixed(ly) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    s << "<text x=\"" << fixed(L + pw + 40) << "\" y=\"" << fixed(ly + 4) << "\">" << xml_escape(models[k])
      << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::system_error(errno, std::generic_category(), "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      std::filesystem::remove(tmp, ignored);
      throw std::system_error(errno, std::generic_category(), "write failed for " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string coefficient_table(std::string_view activation, const HermiteExpansion& exp) {
  std::ostringstream s;
  char buf[160];
  s << "activation: " << activation << "  degree r = " << exp.degree_r << "  E[sigma(z)^2] = "
    << format_double(exp.second_moment) << "\n";
  std::snprintf(buf, sizeof buf, "%4s  %16s  %16s  %12s\n", "i", "c_i", "c_i^2/i!", "cum_fraction");
  s << buf;
  double cum = 0.0;
  for (int i = 0; i <= exp.degree_r; ++i) {
    const double c = exp.coeffs[static_cast<std::size_t>(i)];
    const double share = c * c / factorial(i);
    cum += share;
    const double frac = exp.second_moment > 0.0 ? cum / exp.second_moment : 1.0;
    std::snprintf(buf, sizeof buf, "%4d  %16.10f  %16.10f  %12.8f\n", i, std::abs(c) < 1e-12 ? 0.0 : c, share,
                  frac);
    s << buf;
  }
  std::snprintf(buf, sizeof buf, "residual c_r* = %.10f\n", exp.residual);
  s << buf;
  return s.str();
}

std::string diagnostics_table(const std::vector<DiagnosticRecord>& records) {
  std::size_t width = 6;
  for (const auto& r : records) width = std::max(width, r.metric.size());
  std::ostringstream s;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %14s  %8s  %5s  %5s\n", static_cast<int>(width), "metric", "value", "N", "d",
                "ell");
  s << buf;
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%-*s  %14.8g  %8d  %5d  %5d\n", static_cast<int>(width), r.metric.c_str(), r.value,
                  r.N, r.d, r.ell);
    s << buf;
  }
  return s.str();
}

std::string diagnostics_csv(const std::vector<DiagnosticRecord>& records) {
  std::string out = "metric,value,N,d,ell\n";
  for (const auto& r : records) {
    out += r.metric + ',' + format_double(r.value) + ',' + std::to_string(r.N) + ',' + std::to_string(r.d) + ',' +
           std::to_string(r.ell) + '\n';
  }
  return out;
}

}  // namespace icl
