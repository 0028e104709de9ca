#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace unlimitd {

inline constexpr int kReportVersion = 1;
inline constexpr const char* kReportFormat = "unlimitd-eval-report";

/// Metrics at one context size. Absent fields were not requested.
struct ReportRow {
  int k = 0;
  std::optional<double> mean_mse;
  std::optional<double> ci95_mse;
  std::optional<double> auc;
  std::optional<double> mean_posterior_std;

  bool operator==(const ReportRow&) const = default;
};

struct EvalReport {
  std::string model_id;
  std::vector<std::uint64_t> seeds;
  int n_tasks = 0;
  int n_query = 0;
  int n_each = 0;
  /// Set when n_tasks == 1 and ci95 is reported as 0 by convention.
  bool single_task_ci = false;
  std::string manifest_hash;
  std::vector<ReportRow> rows;  // strictly increasing K

  bool operator==(const EvalReport&) const = default;
};

nlohmann::json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const nlohmann::json& j);

/// CSV with header `metric,K,value,ci95,model,seed`, one row per K per metric.
std::string report_csv(const EvalReport& report);

/// Writes <base>.csv and <base>.json, plus <base>_<metric>.svg plots when
/// `with_plots`. Throws ContractViolation for an empty report before touching
/// the filesystem, IoError with the path otherwise.
std::vector<std::string> write_report(const EvalReport& report, const std::string& base_path, bool with_plots = true);

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

/// Static line plot with axes, ticks and a legend.
std::string render_svg_plot(const std::string& title, const std::string& x_label, const std::string& y_label,
                            const std::vector<PlotSeries>& series);

/// git-describe string baked in at build time ("unknown" outside a checkout).
std::string build_id();

/// {"tool", "command", "config", "seed", "build_id"} record of one run.
nlohmann::json run_manifest(const std::string& command, const nlohmann::json& config, std::uint64_t seed);

/// FNV-1a 64 of the manifest's compact dump, as 16 hex digits.
std::string manifest_hash(const nlohmann::json& manifest);

}  // namespace unlimitd
