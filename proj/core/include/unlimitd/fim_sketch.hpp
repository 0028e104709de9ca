#pragma once

#include <cstdint>
#include <vector>

#include "unlimitd/linalg.hpp"
#include "unlimitd/network.hpp"

namespace unlimitd {

/// Streaming randomized sketch (Y, W) = (F Omega^T, Psi F) of a dataset
/// Fisher information matrix F = (1/N) sum_i J_i^T J_i. Only factored
/// products of the per-task Jacobians are formed; F itself never is.
class FimSketch {
 public:
  /// k = 2s + 1 and l = 4s + 3; requires s >= 1 and 6s + 4 <= P.
  static FimSketch init(Eigen::Index param_count, int s, std::uint64_t seed);

  /// Adds (1/N) J^T J to the sketched matrix. `total_tasks` is N.
  void update(const Matrix& jac, std::size_t total_tasks);

  int subspace_size() const { return s_; }
  int k() const { return static_cast<int>(omega_.rows()); }
  int l() const { return static_cast<int>(psi_.rows()); }
  Eigen::Index param_count() const { return omega_.cols(); }
  std::size_t tasks_seen() const { return tasks_seen_; }

  const Matrix& omega() const { return omega_; }
  const Matrix& psi() const { return psi_; }
  const Matrix& range_sketch() const { return y_; }    // P x k
  const Matrix& corange_sketch() const { return w_; }  // l x P

 private:
  FimSketch() = default;
  int s_ = 0;
  Matrix omega_, psi_, y_, w_;
  std::size_t tasks_seen_ = 0;
};

/// Approximate top eigenpairs of the sketched PSD matrix.
struct ProjectionBasis {
  Matrix q;            // s x P, orthonormal rows
  Vector eigenvalues;  // length s, nonincreasing, clamped at 0
};

/// Symmetric fixed-rank reconstruction from (Y, W): U = orth(Y); solve
/// (Psi U) C = W U in least squares; eigendecompose (C + C^T)/2 and keep the
/// s largest pairs, lifted back through U. Throws SketchRankError when Psi U
/// is rank deficient.
ProjectionBasis fixed_rank_sym_approx(const FimSketch& sketch, int s);

/// Sketches the FIM of a dataset at theta0 (one input batch per task) and
/// extracts its top-s eigenspace. On a rank failure the sketch is redrawn once
/// from a derived seed before giving up.
ProjectionBasis fim_projection(const ParamVector& theta0, const std::vector<Matrix>& task_inputs, int s,
                               std::uint64_t seed);

}  // namespace unlimitd
