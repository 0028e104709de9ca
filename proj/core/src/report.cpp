#include "unlimitd/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "unlimitd/checkpoint.hpp"
#include "unlimitd/errors.hpp"

#ifndef UNLIMITD_BUILD_ID
#define UNLIMITD_BUILD_ID "unknown"
#endif

namespace unlimitd {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<double>();
}

void validate(const EvalReport& report) {
  if (report.rows.empty()) throw ContractViolation("report has no K values");
  for (std::size_t i = 1; i < report.rows.size(); ++i) {
    if (report.rows[i].k <= report.rows[i - 1].k) throw ContractViolation("report K values must be strictly increasing");
  }
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<':
        out += "&lt;";
        break;
      case '>':
        out += "&gt;";
        break;
      case '&':
        out += "&amp;";
        break;
      case '"':
        out += "&quot;";
        break;
      default:
        out += c;
    }
  }
  return out;
}

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace

json to_json(const EvalReport& r) {
  json rows = json::array();
  for (const ReportRow& row : r.rows) {
    rows.push_back({{"K", row.k},
                    {"mean_mse", opt_json(row.mean_mse)},
                    {"ci95_mse", opt_json(row.ci95_mse)},
                    {"auc", opt_json(row.auc)},
                    {"mean_posterior_std", opt_json(row.mean_posterior_std)}});
  }
  return {{"format", kReportFormat},
          {"version", kReportVersion},
          {"model", r.model_id},
          {"seeds", r.seeds},
          {"n_tasks", r.n_tasks},
          {"n_query", r.n_query},
          {"n_each", r.n_each},
          {"single_task_ci", r.single_task_ci},
          {"manifest_hash", r.manifest_hash},
          {"rows", rows}};
}

EvalReport eval_report_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != kReportFormat) throw FormatError("not an unlimitd eval report");
    if (j.at("version").get<int>() != kReportVersion) throw FormatError("unsupported report version");
    EvalReport r;
    r.model_id = j.at("model").get<std::string>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    r.n_tasks = j.at("n_tasks").get<int>();
    r.n_query = j.at("n_query").get<int>();
    r.n_each = j.at("n_each").get<int>();
    r.single_task_ci = j.at("single_task_ci").get<bool>();
    r.manifest_hash = j.at("manifest_hash").get<std::string>();
    for (const auto& row : j.at("rows")) {
      r.rows.push_back({row.at("K").get<int>(), opt_from(row, "mean_mse"), opt_from(row, "ci95_mse"),
                        opt_from(row, "auc"), opt_from(row, "mean_posterior_std")});
    }
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed eval report: ") + e.what());
  }
}

std::string report_csv(const EvalReport& r) {
  validate(r);
  std::string seeds;
  for (std::size_t i = 0; i < r.seeds.size(); ++i) {
    if (i > 0) seeds += ';';
    seeds += std::to_string(r.seeds[i]);
  }
  std::ostringstream out;
  out << "metric,K,value,ci95,model,seed\n";
  const auto emit = [&](const char* metric, int k, double value, const std::optional<double>& ci) {
    out << metric << ',' << k << ',' << fmt(value) << ',' << (ci ? fmt(*ci) : std::string()) << ',' << r.model_id
        << ',' << seeds << '\n';
  };
  for (const ReportRow& row : r.rows) {
    if (row.mean_mse) emit("mse", row.k, *row.mean_mse, row.ci95_mse);
  }
  for (const ReportRow& row : r.rows) {
    if (row.auc) emit("auc", row.k, *row.auc, std::nullopt);
  }
  for (const ReportRow& row : r.rows) {
    if (row.mean_posterior_std) emit("posterior_std", row.k, *row.mean_posterior_std, std::nullopt);
  }
  return out.str();
}

std::vector<std::string> write_report(const EvalReport& report, const std::string& base_path, bool with_plots) {
  validate(report);
  std::vector<std::string> written;
  const std::string csv_path = base_path + ".csv";
  write_text_file(csv_path, report_csv(report));
  written.push_back(csv_path);
  const std::string json_path = base_path + ".json";
  write_text_file(json_path, to_json(report).dump(2) + "\n");
  written.push_back(json_path);
  if (!with_plots) return written;

  const auto plot = [&](const char* suffix, const char* title, const char* y_label,
                        std::optional<double> ReportRow::*field) {
    PlotSeries s{report.model_id, {}, {}};
    for (const ReportRow& row : report.rows) {
      if (row.*field) {
        s.x.push_back(row.k);
        s.y.push_back(*(row.*field));
      }
    }
    if (s.x.empty()) return;
    const std::string path = base_path + "_" + suffix + ".svg";
    write_text_file(path, render_svg_plot(title, "K (context points)", y_label, {s}));
    written.push_back(path);
  };
  plot("mse", "MSE vs K", "mean MSE", &ReportRow::mean_mse);
  plot("auc", "OoD AUC vs K", "AUC-ROC", &ReportRow::auc);
  plot("std", "Posterior std vs K", "mean posterior std", &ReportRow::mean_posterior_std);
  return written;
}

std::string render_svg_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                            const std::vector<PlotSeries>& series) {
  constexpr double width = 640, height = 420, left = 70, right = 20, top = 40, bottom = 60;
  double x_min = INFINITY, x_max = -INFINITY, y_min = INFINITY, y_max = -INFINITY;
  for (const PlotSeries& s : series) {
    if (s.x.size() != s.y.size()) throw ContractViolation("plot series x/y length mismatch");
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.x[i]) || !std::isfinite(s.y[i])) continue;
      x_min = std::min(x_min, s.x[i]);
      x_max = std::max(x_max, s.x[i]);
      y_min = std::min(y_min, s.y[i]);
      y_max = std::max(y_max, s.y[i]);
    }
  }
  if (!(x_min <= x_max)) x_min = 0, x_max = 1, y_min = 0, y_max = 1;
  if (x_max == x_min) x_min -= 0.5, x_max += 0.5;
  if (y_max == y_min) y_min -= 0.5, y_max += 0.5;
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;

  const double pw = width - left - right, ph = height - top - bottom;
  const auto sx = [&](double x) { return left + (x - x_min) / (x_max - x_min) * pw; };
  const auto sy = [&](double y) { return top + (1.0 - (y - y_min) / (y_max - y_min)) * ph; };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd"};

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
    << "</text>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top + ph << "\" x2=\"" << left + pw << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + ph
    << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double yv = y_min + (y_max - y_min) * i / 4.0;
    const double xv = x_min + (x_max - x_min) * i / 4.0;
    o << "<line x1=\"" << left - 4 << "\" y1=\"" << sy(yv) << "\" x2=\"" << left << "\" y2=\"" << sy(yv)
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << left - 8 << "\" y=\"" << sy(yv) + 4 << "\" text-anchor=\"end\">" << tick_label(yv)
      << "</text>\n";
    o << "<line x1=\"" << sx(xv) << "\" y1=\"" << top + ph << "\" x2=\"" << sx(xv) << "\" y2=\"" << top + ph + 4
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << sx(xv) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">" << tick_label(xv)
      << "</text>\n";
  }
  o << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 16 << "\" text-anchor=\"middle\">"
    << xml_escape(x_label) << "</text>\n";
  o << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
    << xml_escape(y_label) << "</text>\n";
  for (std::size_t si = 0; si < series.size(); ++si) {
    const PlotSeries& s = series[si];
    const char* color = colors[si % 5];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << sx(s.x[i]) << ',' << sy(s.y[i]);
    o << "\"/>\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      o << "<circle cx=\"" << sx(s.x[i]) << "\" cy=\"" << sy(s.y[i]) << "\" r=\"3\" fill=\"" << color << "\"/>\n";
    }
    o << "<text x=\"" << left + pw - 4 << "\" y=\"" << top + 14 + 16 * si << "\" text-anchor=\"end\" fill=\""
      << color << "\">" << xml_escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

std::string build_id() { return UNLIMITD_BUILD_ID; }

json run_manifest(const std::string& command, const json& config, std::uint64_t seed) {
  return {{"tool", "unlimitd"}, {"command", command}, {"config", config}, {"seed", seed}, {"build_id", build_id()}};
}

std::string manifest_hash(const json& manifest) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : manifest.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace unlimitd
