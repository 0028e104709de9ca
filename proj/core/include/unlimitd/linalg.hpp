#pragma once

#include <Eigen/Core>
#include <Eigen/Cholesky>

#include <vector>

namespace unlimitd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Cholesky factor of an SPD matrix together with the diagonal jitter that
/// was needed to obtain it.
struct SpdFactor {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;

  /// log det of the (jittered) factored matrix.
  double log_det() const;
  Vector solve(const Vector& rhs) const { return llt.solve(rhs); }
  Matrix solve(const Matrix& rhs) const { return llt.solve(rhs); }
};

/// Factorizes `a` (symmetric, assumed PSD up to rounding).
///
/// Tries the plain matrix first. On failure adds 1e-10 * mean(diag) to the
/// diagonal and escalates by factors of ten up to 1e-4 * mean(diag); throws
/// ConditioningError listing every jitter level attempted if all fail.
SpdFactor factorize_spd(const Matrix& a);

/// Orthonormalizes the rows of `m` (s x P, s <= P) with a Householder QR of
/// its transpose. Row signs are fixed so that the diagonal of R is positive.
Matrix orthonormalize_rows(const Matrix& m);

/// Orthonormal basis for the column space of `m` (P x k), same sign rule.
Matrix orthonormalize_columns(const Matrix& m);

}  // namespace unlimitd
