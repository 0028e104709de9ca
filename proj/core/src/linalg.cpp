#include "unlimitd/linalg.hpp"

#include <Eigen/QR>

#include <cmath>
#include <sstream>

#include "unlimitd/errors.hpp"

namespace unlimitd {

double SpdFactor::log_det() const {
  const auto& l = llt.matrixLLT();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < l.rows(); ++i) sum += std::log(l(i, i));
  return 2.0 * sum;
}

SpdFactor factorize_spd(const Matrix& a) {
  if (a.rows() != a.cols()) throw ContractViolation("factorize_spd: matrix is not square");
  SpdFactor out;
  out.llt.compute(a);
  if (out.llt.info() == Eigen::Success) return out;

  const double mean_diag = a.rows() > 0 ? a.diagonal().mean() : 1.0;
  const double scale = (std::isfinite(mean_diag) && mean_diag > 0.0) ? mean_diag : 1.0;
  std::vector<double> tried;
  for (double rel = 1e-10; rel <= 1e-4 * (1.0 + 1e-9); rel *= 10.0) {
    const double jitter = rel * scale;
    tried.push_back(jitter);
    Matrix shifted = a;
    shifted.diagonal().array() += jitter;
    out.llt.compute(shifted);
    if (out.llt.info() == Eigen::Success) {
      out.jitter = jitter;
      return out;
    }
  }
  std::ostringstream msg;
  msg << "SPD factorization failed for " << a.rows() << "x" << a.cols()
      << " matrix after jitter levels";
  for (double j : tried) msg << ' ' << j;
  throw ConditioningError(msg.str(), std::move(tried));
}

Matrix orthonormalize_columns(const Matrix& m) {
  if (m.cols() > m.rows()) {
    throw ContractViolation("orthonormalize_columns: more columns than rows");
  }
  Eigen::HouseholderQR<Matrix> qr(m);
  Matrix q = qr.householderQ() * Matrix::Identity(m.rows(), m.cols());
  const Matrix& r = qr.matrixQR();
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

Matrix orthonormalize_rows(const Matrix& m) {
  return orthonormalize_columns(m.transpose()).transpose();
}

}  // namespace unlimitd
