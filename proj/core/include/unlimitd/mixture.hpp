#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "unlimitd/gp.hpp"

namespace unlimitd {

struct MixtureCluster {
  Vector mu;
  Vector s_vec;  // empty when the model uses the identity covariance
};

/// Equal-weighted mixture of GPs sharing theta0 and the projection Q.
///
/// A null projection means Sigma = I_P, which is only meaningful with a
/// single cluster: identical covariances cannot separate clusters.
class MixtureModel {
 public:
  MixtureModel(ParamVector theta0, std::shared_ptr<const Matrix> projection, std::vector<MixtureCluster> clusters,
               double sigma_eps);

  static MixtureModel from_prior(const GaussianTaskPrior& prior);

  const ParamVector& theta0() const { return theta0_; }
  const std::shared_ptr<const Matrix>& projection() const { return q_; }
  bool has_projection() const { return q_ != nullptr; }
  const std::vector<MixtureCluster>& clusters() const { return clusters_; }
  std::size_t num_clusters() const { return clusters_.size(); }
  double sigma_eps() const { return sigma_eps_; }

  CovarianceParam cluster_covariance(std::size_t j) const;
  GaussianTaskPrior cluster_prior(std::size_t j) const;

 private:
  ParamVector theta0_;
  std::shared_ptr<const Matrix> q_;
  std::vector<MixtureCluster> clusters_;
  double sigma_eps_;
};

/// log(alpha) - logsumexp(-nll_1, ..., -nll_alpha), max-shifted so the result
/// stays finite whenever one term is.
double combine_cluster_nlls(std::span<const double> nlls);

/// Posterior cluster responsibilities softmax(-nll); also the derivative of
/// combine_cluster_nlls with respect to each nll_j.
std::vector<double> cluster_responsibilities(std::span<const double> nlls);

/// Per-cluster NLLs of one batch; the Jacobian is computed once and shared.
std::vector<double> cluster_nlls(const MixtureModel& model, const Matrix& inputs, const Vector& y);

double mixture_nll(const MixtureModel& model, const Matrix& inputs, const Vector& y);

/// argmin_j NLL_j on the context; ties go to the smallest index.
std::size_t infer_cluster(const MixtureModel& model, const Matrix& context_inputs, const Vector& context_y);

struct MixturePrediction {
  PredictiveGaussian predictive;
  std::size_t cluster = 0;
};

/// Hard cluster selection followed by GP conditioning of that cluster.
MixturePrediction predict(const MixtureModel& model, const Matrix& context_inputs, const Vector& context_y,
                          const Matrix& query_inputs);

}  // namespace unlimitd
