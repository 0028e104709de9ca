#include "unlimitd/gp.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "unlimitd/errors.hpp"

namespace unlimitd {

CovarianceParam CovarianceParam::low_rank(std::shared_ptr<const Matrix> q, Vector s_vec) {
  if (!q) throw ContractViolation("CovarianceParam: null projection");
  if (q->rows() < 1 || q->rows() > q->cols()) {
    throw ContractViolation("CovarianceParam: need 1 <= s <= P, got s=" + std::to_string(q->rows()) +
                            " P=" + std::to_string(q->cols()));
  }
  if (s_vec.size() != q->rows()) throw ContractViolation("CovarianceParam: s_vec length must equal Q rows");
  const Matrix gram = (*q) * q->transpose();
  const double err = (gram - Matrix::Identity(q->rows(), q->rows())).cwiseAbs().maxCoeff();
  if (err > 1e-8) {
    throw ContractViolation("CovarianceParam: rows of Q are not orthonormal (max |QQ^T - I| = " +
                            std::to_string(err) + ")");
  }
  CovarianceParam c;
  c.q_ = std::move(q);
  c.s_ = std::move(s_vec);
  return c;
}

const Matrix& CovarianceParam::projection() const {
  if (!q_) throw ContractViolation("CovarianceParam: identity covariance has no projection");
  return *q_;
}

GaussianTaskPrior::GaussianTaskPrior(ParamVector theta0_, Vector mu_, CovarianceParam cov_, double sigma_eps_)
    : theta0(std::move(theta0_)), mu(std::move(mu_)), cov(std::move(cov_)), sigma_eps(sigma_eps_) {
  const Eigen::Index p = theta0.size();
  if (mu.size() != p) throw ContractViolation("GaussianTaskPrior: mu length differs from P");
  if (!cov.is_identity() && cov.projection().cols() != p) {
    throw ContractViolation("GaussianTaskPrior: projection width differs from P");
  }
  if (!(sigma_eps > 0.0)) throw ContractViolation("GaussianTaskPrior: sigma_eps must be positive");
}

Vector PredictiveGaussian::stddev() const { return cov.diagonal().cwiseMax(0.0).cwiseSqrt(); }

Matrix kernel_from_jacobians(const Matrix& jac1, const Matrix& jac2, const CovarianceParam& cov) {
  if (jac1.cols() != jac2.cols()) throw ContractViolation("kernel: Jacobian widths differ");
  if (cov.is_identity()) return jac1 * jac2.transpose();
  const Matrix& q = cov.projection();
  if (q.cols() != jac1.cols()) throw ContractViolation("kernel: projection width differs from P");
  const Vector s2 = cov.scales().array().square();
  const Matrix a1 = jac1 * q.transpose();
  const Matrix a2 = jac2 * q.transpose();
  return a1 * s2.asDiagonal() * a2.transpose();
}

Matrix kernel(const GaussianTaskPrior& prior, const Matrix& x1, const Matrix& x2) {
  return kernel_from_jacobians(jacobian(prior.theta0, x1), jacobian(prior.theta0, x2), prior.cov);
}

PredictiveGaussian prior_predictive(const GaussianTaskPrior& prior, const Matrix& inputs) {
  const Matrix jac = jacobian(prior.theta0, inputs);
  PredictiveGaussian out;
  out.mean = jac * prior.mu;
  out.cov = kernel_from_jacobians(jac, jac, prior.cov);
  out.cov.diagonal().array() += prior.sigma_eps * prior.sigma_eps;
  return out;
}

NllTerms nll_terms(const Matrix& jac, const Matrix* projected, const CovarianceParam& cov, const Vector& mu,
                   const Vector& y, double sigma_eps, bool with_grads) {
  const Eigen::Index n = jac.rows();
  if (y.size() != n) {
    throw ContractViolation("nll: expected " + std::to_string(n) + " outputs, got " + std::to_string(y.size()));
  }
  if (mu.size() != jac.cols()) throw ContractViolation("nll: mu length differs from P");

  Matrix projected_local;
  Matrix scaled;  // A S for low rank
  Matrix sigma_y;
  if (cov.is_identity()) {
    sigma_y = jac * jac.transpose();
  } else {
    if (projected == nullptr) {
      projected_local = jac * cov.projection().transpose();
      projected = &projected_local;
    }
    scaled = (*projected) * cov.scales().array().square().matrix().asDiagonal();
    sigma_y = scaled * projected->transpose();
  }
  sigma_y.diagonal().array() += sigma_eps * sigma_eps;

  const Vector residual = y - jac * mu;
  const SpdFactor factor = factorize_spd(sigma_y);
  const Vector alpha = factor.solve(residual);

  NllTerms out;
  out.value = 0.5 * (residual.dot(alpha) + factor.log_det() + static_cast<double>(n) * std::log(2.0 * std::numbers::pi));
  if (!with_grads) return out;

  // m = Sigma^-1 - alpha alpha^T is twice dNLL/dSigma_y.
  Matrix m = factor.solve(Matrix(Matrix::Identity(n, n)));
  m.noalias() -= alpha * alpha.transpose();

  out.grad_mu = -(jac.transpose() * alpha);
  if (cov.is_identity()) {
    out.grad_jac.noalias() = m * jac;
  } else {
    const Matrix m_scaled = m * scaled;  // M A S
    out.grad_jac.noalias() = m_scaled * cov.projection();
    // dNLL/ds_i = s_i (A^T M A)_ii
    out.grad_s = cov.scales().cwiseProduct((projected->transpose() * m * (*projected)).diagonal());
  }
  out.grad_jac.noalias() -= alpha * mu.transpose();
  return out;
}

double nll(const GaussianTaskPrior& prior, const Matrix& inputs, const Vector& y) {
  const Matrix jac = jacobian(prior.theta0, inputs);
  return nll_terms(jac, nullptr, prior.cov, prior.mu, y, prior.sigma_eps, false).value;
}

PredictiveGaussian posterior_predictive(const GaussianTaskPrior& prior, const Matrix& context_inputs,
                                        const Vector& context_y, const Matrix& query_inputs) {
  const Matrix jac_c = jacobian(prior.theta0, context_inputs);
  const Matrix jac_q = jacobian(prior.theta0, query_inputs);
  if (context_y.size() != jac_c.rows()) throw ContractViolation("posterior_predictive: context output length mismatch");

  Matrix k_cc = kernel_from_jacobians(jac_c, jac_c, prior.cov);
  k_cc.diagonal().array() += prior.sigma_eps * prior.sigma_eps;
  const Matrix k_qc = kernel_from_jacobians(jac_q, jac_c, prior.cov);
  const Matrix k_qq = kernel_from_jacobians(jac_q, jac_q, prior.cov);

  const SpdFactor factor = factorize_spd(k_cc);
  const Vector residual = context_y - jac_c * prior.mu;

  PredictiveGaussian out;
  out.mean = jac_q * prior.mu + k_qc * factor.solve(residual);
  out.cov = k_qq - k_qc * factor.solve(Matrix(k_qc.transpose()));
  out.cov = (0.5 * (out.cov + out.cov.transpose())).eval();
  return out;
}

}  // namespace unlimitd
