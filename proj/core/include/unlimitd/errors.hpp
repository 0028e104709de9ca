#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace unlimitd {

/// Thrown when arguments violate an operation's shape or range contract.
class ContractViolation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An SPD factorization failed even after the full jitter escalation.
class ConditioningError : public std::runtime_error {
 public:
  ConditioningError(const std::string& what, std::vector<double> jitters)
      : std::runtime_error(what), jitters_(std::move(jitters)) {}

  /// Absolute jitter values that were tried, in order.
  const std::vector<double>& attempted_jitters() const noexcept { return jitters_; }

 private:
  std::vector<double> jitters_;
};

/// The sketched FIM could not be reconstructed (rank-deficient Psi U).
class SketchRankError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file content, e.g. a checkpoint or CSV that does not parse.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace unlimitd
