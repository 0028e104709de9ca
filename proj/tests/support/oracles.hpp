#pragma once

// Independent reference implementations used as test oracles. None of these
// call into the library's network or GP code paths except where noted.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "unlimitd/gp.hpp"
#include "unlimitd/network.hpp"
#include "unlimitd/rng.hpp"

namespace oracle {

using unlimitd::Matrix;
using unlimitd::Vector;

/// Scalar-loop forward pass reading parameters by the documented flat layout:
/// per layer, W (out x in, column-major) then b; hidden layers use the
/// activation, the last is affine. Returns N_y x K.
inline Matrix forward(const std::vector<int>& widths, bool relu, const Vector& theta, const Matrix& x) {
  const int layers = static_cast<int>(widths.size()) - 1;
  Matrix out(widths.back(), x.cols());
  for (Eigen::Index t = 0; t < x.cols(); ++t) {
    std::vector<double> a(x.col(t).data(), x.col(t).data() + x.rows());
    Eigen::Index off = 0;
    for (int l = 0; l < layers; ++l) {
      const int in = widths[l], outw = widths[l + 1];
      std::vector<double> z(outw, 0.0);
      for (int o = 0; o < outw; ++o) {
        double acc = 0.0;
        for (int i = 0; i < in; ++i) acc += theta[off + static_cast<Eigen::Index>(i) * outw + o] * a[i];
        z[o] = acc + theta[off + static_cast<Eigen::Index>(in) * outw + o];
      }
      off += static_cast<Eigen::Index>(in) * outw + outw;
      if (l + 1 < layers && relu) {
        for (double& v : z) v = v > 0.0 ? v : 0.0;
      }
      a = std::move(z);
    }
    for (int o = 0; o < widths.back(); ++o) out(o, t) = a[o];
  }
  return out;
}

inline Matrix forward(const unlimitd::ParamVector& theta, const Matrix& x) {
  return forward(theta.spec().layer_widths(), theta.spec().activation() == unlimitd::Activation::ReLU, theta.values(),
                 x);
}

/// Central differences of a vector-valued function; column j is d f / d x_j.
inline Matrix central_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h) {
  const Vector f0 = f(x);
  Matrix jac(f0.size(), x.size());
  Vector xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double orig = xp[j];
    xp[j] = orig + h;
    const Vector fp = f(xp);
    xp[j] = orig - h;
    const Vector fm = f(xp);
    xp[j] = orig;
    jac.col(j) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

inline Vector central_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    const double orig = xp[j];
    xp[j] = orig + h;
    const double fp = f(xp);
    xp[j] = orig - h;
    const double fm = f(xp);
    xp[j] = orig;
    g[j] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Finite-difference Jacobian of the reference forward pass; rows are
/// t * N_y + o to match the vectorized output order.
inline Matrix fd_network_jacobian(const unlimitd::ParamVector& theta, const Matrix& x, double h = 1e-5) {
  const auto& widths = theta.spec().layer_widths();
  const bool relu = theta.spec().activation() == unlimitd::Activation::ReLU;
  return central_jacobian(
      [&](const Vector& v) {
        const Matrix y = forward(widths, relu, v, x);
        return Vector(Eigen::Map<const Vector>(y.data(), y.size()));
      },
      theta.values(), h);
}

/// max |a - b| / max(max |b|, floor)
inline double max_rel_error(const Matrix& a, const Matrix& b, double floor = 1e-12) {
  const double scale = std::max(b.cwiseAbs().maxCoeff(), floor);
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

/// Gaussian log density by explicit inverse and LU determinant.
inline double gaussian_nll(const Vector& y, const Vector& mean, const Matrix& cov) {
  const Eigen::FullPivLU<Matrix> lu(cov);
  const Vector r = y - mean;
  const double quad = r.dot(lu.inverse() * r);
  double logdet = 0.0;
  const Matrix u = lu.matrixLU().triangularView<Eigen::Upper>();
  for (Eigen::Index i = 0; i < u.rows(); ++i) logdet += std::log(std::abs(u(i, i)));
  return 0.5 * (quad + logdet + static_cast<double>(y.size()) * std::log(2.0 * std::numbers::pi));
}

/// Dense weight-space Bayesian linear regression. Weights w = mu + L z with
/// z ~ N(0, I); features of an input batch are J L, so the posterior over z is
/// N(A^-1 Phi^T r / s2, A^-1) with A = Phi^T Phi / s2 + I.
struct WeightSpaceBlr {
  Vector mu;
  Matrix l;  // P x r, Sigma = L L^T
  double sigma;

  Vector prior_mean(const Matrix& jac) const { return jac * mu; }
  Matrix prior_cov(const Matrix& jac) const {
    const Matrix phi = jac * l;
    return phi * phi.transpose() + sigma * sigma * Matrix::Identity(jac.rows(), jac.rows());
  }
  double nll(const Matrix& jac, const Vector& y) const { return gaussian_nll(y, prior_mean(jac), prior_cov(jac)); }
  void posterior(const Matrix& jac_c, const Vector& y, const Matrix& jac_q, Vector& mean, Matrix& cov) const {
    const Matrix phi = jac_c * l;
    const double s2 = sigma * sigma;
    const Matrix a = phi.transpose() * phi / s2 + Matrix::Identity(l.cols(), l.cols());
    const Matrix a_inv = a.inverse();
    const Vector z_mean = a_inv * phi.transpose() * (y - jac_c * mu) / s2;
    const Matrix phi_q = jac_q * l;
    mean = jac_q * mu + phi_q * z_mean;
    cov = phi_q * a_inv * phi_q.transpose();
  }
};

/// Square root factor of the prior covariance held by `cov`.
inline Matrix covariance_factor(const unlimitd::CovarianceParam& cov, Eigen::Index p) {
  if (cov.is_identity()) return Matrix::Identity(p, p);
  return cov.projection().transpose() * cov.scales().asDiagonal();
}

/// Exhaustive pair count: P(ood > in) + 0.5 P(ood == in).
inline double auc_pairs(const std::vector<double>& in, const std::vector<double>& ood) {
  double wins = 0.0;
  for (double o : ood) {
    for (double i : in) wins += o > i ? 1.0 : (o == i ? 0.5 : 0.0);
  }
  return wins / (static_cast<double>(in.size()) * static_cast<double>(ood.size()));
}

/// Largest principal angle (radians) between the row spaces of two matrices
/// with orthonormal rows.
inline double largest_principal_angle(const Matrix& a, const Matrix& b) {
  const Eigen::JacobiSVD<Matrix> svd(a * b.transpose());
  const double smallest = std::clamp(svd.singularValues().minCoeff(), -1.0, 1.0);
  return std::acos(smallest);
}

inline unlimitd::ParamVector random_params(const unlimitd::NetworkSpec& spec, unlimitd::Rng& rng, double scale = 1.0) {
  return {spec, rng.normal_vector(spec.param_count(), scale)};
}

}  // namespace oracle
