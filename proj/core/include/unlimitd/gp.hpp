#pragma once

#include <memory>

#include "unlimitd/linalg.hpp"
#include "unlimitd/network.hpp"

namespace unlimitd {

/// Prior covariance over the weights: either Sigma = I_P, or the low-rank
/// Sigma = Q^T diag(s^2) Q with Q (s x P) having orthonormal rows. Q is held
/// by shared pointer so that mixture clusters share one projection.
class CovarianceParam {
 public:
  static CovarianceParam identity() { return CovarianceParam(); }
  /// Validates Q Q^T = I_s to 1e-8 and s_vec.size() == Q.rows().
  static CovarianceParam low_rank(std::shared_ptr<const Matrix> q, Vector s_vec);
  static CovarianceParam low_rank(Matrix q, Vector s_vec) {
    return low_rank(std::make_shared<const Matrix>(std::move(q)), std::move(s_vec));
  }

  bool is_identity() const { return q_ == nullptr; }
  const Matrix& projection() const;
  const std::shared_ptr<const Matrix>& shared_projection() const { return q_; }
  const Vector& scales() const { return s_; }
  Eigen::Index rank() const { return s_.size(); }

 private:
  CovarianceParam() = default;
  std::shared_ptr<const Matrix> q_;
  Vector s_;
};

/// One GP over functions: linearization point, weight-prior mean and
/// covariance, and the observation noise standard deviation.
struct GaussianTaskPrior {
  ParamVector theta0;
  Vector mu;
  CovarianceParam cov;
  double sigma_eps;

  GaussianTaskPrior(ParamVector theta0, Vector mu, CovarianceParam cov, double sigma_eps);
};

struct PredictiveGaussian {
  Vector mean;
  Matrix cov;

  Vector stddev() const;
};

/// J(theta0, X1) Sigma J(theta0, X2)^T, factored through Q for low rank.
Matrix kernel(const GaussianTaskPrior& prior, const Matrix& x1, const Matrix& x2);

/// Same kernel from precomputed Jacobians.
Matrix kernel_from_jacobians(const Matrix& jac1, const Matrix& jac2, const CovarianceParam& cov);

/// Mean J mu and covariance k(X, X) + sigma_eps^2 I over the vectorized outputs.
PredictiveGaussian prior_predictive(const GaussianTaskPrior& prior, const Matrix& inputs);

/// Joint NLL of the vectorized outputs y (length N_y K) under the prior predictive.
double nll(const GaussianTaskPrior& prior, const Matrix& inputs, const Vector& y);

/// Conditions on (Xc, yc) and evaluates at Xq. Observation noise enters the
/// context block only; the returned covariance is over noiseless query values.
PredictiveGaussian posterior_predictive(const GaussianTaskPrior& prior, const Matrix& context_inputs,
                                        const Vector& context_y, const Matrix& query_inputs);

/// NLL and its partial derivatives with respect to the Jacobian, mu and s_vec.
struct NllTerms {
  double value = 0.0;
  Matrix grad_jac;  // (N_y K) x P
  Vector grad_mu;   // P
  Vector grad_s;    // s (empty for identity covariance)
};

/// Gaussian NLL computed from a precomputed Jacobian. `projected` must be
/// jac * Q^T for a low-rank covariance and is ignored for the identity.
NllTerms nll_terms(const Matrix& jac, const Matrix* projected, const CovarianceParam& cov, const Vector& mu,
                   const Vector& y, double sigma_eps, bool with_grads);

/// Column-major vectorization of an N_y x K output matrix.
inline Vector vectorize(const Matrix& outputs) {
  return Eigen::Map<const Vector>(outputs.data(), outputs.size());
}

}  // namespace unlimitd
