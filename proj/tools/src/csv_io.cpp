#include "csv_io.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "unlimitd/checkpoint.hpp"
#include "unlimitd/errors.hpp"

namespace unlimitd::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) out.push_back(trim(field));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> parse_double(const std::string& s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string join(const std::vector<std::string>& cols) {
  std::string out;
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::vector<double>> read_numeric_csv(const std::string& path, const std::vector<std::string>& columns) {
  std::istringstream in(read_text_file(path));
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  bool first = true;
  const auto fail = [&](const std::string& msg) { throw FormatError(path + ":" + std::to_string(line_no) + ": " + msg); };
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::vector<std::string> fields = split(line);
    if (first) {
      first = false;
      if (!fields.empty() && !parse_double(fields[0])) {
        if (fields != columns) fail("expected header '" + join(columns) + "', got '" + trim(line) + "'");
        continue;
      }
    }
    if (fields.size() != columns.size()) {
      fail("expected " + std::to_string(columns.size()) + " columns, got " + std::to_string(fields.size()));
    }
    std::vector<double> row;
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto v = parse_double(fields[c]);
      if (!v) fail("column '" + columns[c] + "' is not a number: '" + fields[c] + "'");
      if (!std::isfinite(*v)) fail("column '" + columns[c] + "' is not finite");
      row.push_back(*v);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void read_context_csv(const std::string& path, Matrix& x, Vector& y) {
  const auto rows = read_numeric_csv(path, {"x", "y"});
  x.resize(1, static_cast<Eigen::Index>(rows.size()));
  y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x(0, static_cast<Eigen::Index>(i)) = rows[i][0];
    y[static_cast<Eigen::Index>(i)] = rows[i][1];
  }
}

Matrix read_query_csv(const std::string& path) {
  const auto rows = read_numeric_csv(path, {"x"});
  Matrix x(1, static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) x(0, static_cast<Eigen::Index>(i)) = rows[i][0];
  return x;
}

std::string prediction_csv(const PredictionRows& rows) {
  std::string out = "x,mean";
  if (rows.std) out += ",std";
  if (rows.cluster) out += ",cluster";
  out += '\n';
  for (Eigen::Index i = 0; i < rows.x.cols(); ++i) {
    out += format_double(rows.x(0, i)) + ',' + format_double(rows.mean[i]);
    if (rows.std) out += ',' + format_double((*rows.std)[i]);
    if (rows.cluster) out += ',' + std::to_string(*rows.cluster);
    out += '\n';
  }
  return out;
}

}  // namespace unlimitd::cli
