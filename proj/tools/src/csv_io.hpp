#pragma once

#include <optional>
#include <string>
#include <vector>

#include "unlimitd/linalg.hpp"

namespace unlimitd::cli {

/// Numeric CSV with an optional header row naming the expected columns.
/// Blank lines are skipped. Errors are FormatError "path:line: message".
std::vector<std::vector<double>> read_numeric_csv(const std::string& path, const std::vector<std::string>& columns);

/// Context file: `x,y` rows. Returns 1 x K inputs and K outputs.
void read_context_csv(const std::string& path, Matrix& x, Vector& y);
/// Query file: `x` rows.
Matrix read_query_csv(const std::string& path);

struct PredictionRows {
  Matrix x;
  Vector mean;
  std::optional<Vector> std;        // absent for point predictors
  std::optional<std::size_t> cluster;  // present for mixtures
};

/// Header `x,mean[,std][,cluster]`, one row per query.
std::string prediction_csv(const PredictionRows& rows);

/// Shortest round-trip decimal form.
std::string format_double(double v);

}  // namespace unlimitd::cli
