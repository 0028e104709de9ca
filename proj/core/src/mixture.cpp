#include "unlimitd/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "unlimitd/errors.hpp"

namespace unlimitd {

MixtureModel::MixtureModel(ParamVector theta0, std::shared_ptr<const Matrix> projection,
                           std::vector<MixtureCluster> clusters, double sigma_eps)
    : theta0_(std::move(theta0)), q_(std::move(projection)), clusters_(std::move(clusters)), sigma_eps_(sigma_eps) {
  if (clusters_.empty()) throw ContractViolation("MixtureModel: need at least one cluster");
  if (!q_ && clusters_.size() > 1) {
    throw ContractViolation("MixtureModel: identity covariance supports a single cluster only");
  }
  if (!(sigma_eps_ > 0.0)) throw ContractViolation("MixtureModel: sigma_eps must be positive");
  for (const auto& c : clusters_) {
    if (c.mu.size() != theta0_.size()) throw ContractViolation("MixtureModel: cluster mu length differs from P");
    const Eigen::Index s = q_ ? q_->rows() : 0;
    if (c.s_vec.size() != s) throw ContractViolation("MixtureModel: cluster s_vec length differs from Q rows");
  }
  // Validates orthonormality once.
  if (q_) (void)CovarianceParam::low_rank(q_, clusters_.front().s_vec);
}

MixtureModel MixtureModel::from_prior(const GaussianTaskPrior& prior) {
  MixtureCluster c{prior.mu, prior.cov.is_identity() ? Vector() : prior.cov.scales()};
  return {prior.theta0, prior.cov.shared_projection(), {std::move(c)}, prior.sigma_eps};
}

CovarianceParam MixtureModel::cluster_covariance(std::size_t j) const {
  if (!q_) return CovarianceParam::identity();
  return CovarianceParam::low_rank(q_, clusters_.at(j).s_vec);
}

GaussianTaskPrior MixtureModel::cluster_prior(std::size_t j) const {
  return {theta0_, clusters_.at(j).mu, cluster_covariance(j), sigma_eps_};
}

double combine_cluster_nlls(std::span<const double> nlls) {
  if (nlls.empty()) throw ContractViolation("combine_cluster_nlls: no clusters");
  if (nlls.size() == 1) return nlls[0];
  double best = std::numeric_limits<double>::infinity();
  for (double v : nlls) best = std::min(best, v);
  if (!std::isfinite(best)) return best;
  double sum = 0.0;
  for (double v : nlls) sum += std::exp(-(v - best));
  return std::log(static_cast<double>(nlls.size())) + best - std::log(sum);
}

std::vector<double> cluster_responsibilities(std::span<const double> nlls) {
  std::vector<double> w(nlls.size());
  if (nlls.empty()) return w;
  const double best = *std::min_element(nlls.begin(), nlls.end());
  double sum = 0.0;
  for (std::size_t j = 0; j < nlls.size(); ++j) {
    w[j] = std::exp(-(nlls[j] - best));
    sum += w[j];
  }
  for (double& v : w) v /= sum;
  return w;
}

std::vector<double> cluster_nlls(const MixtureModel& model, const Matrix& inputs, const Vector& y) {
  const Matrix jac = jacobian(model.theta0(), inputs);
  Matrix projected;
  if (model.has_projection()) projected = jac * model.projection()->transpose();
  std::vector<double> out;
  out.reserve(model.num_clusters());
  for (std::size_t j = 0; j < model.num_clusters(); ++j) {
    const CovarianceParam cov = model.cluster_covariance(j);
    out.push_back(nll_terms(jac, model.has_projection() ? &projected : nullptr, cov, model.clusters()[j].mu, y,
                            model.sigma_eps(), false)
                      .value);
  }
  return out;
}

double mixture_nll(const MixtureModel& model, const Matrix& inputs, const Vector& y) {
  const std::vector<double> nlls = cluster_nlls(model, inputs, y);
  return combine_cluster_nlls(nlls);
}

std::size_t infer_cluster(const MixtureModel& model, const Matrix& context_inputs, const Vector& context_y) {
  if (model.num_clusters() == 1) return 0;
  const std::vector<double> nlls = cluster_nlls(model, context_inputs, context_y);
  std::size_t best = 0;
  for (std::size_t j = 1; j < nlls.size(); ++j) {
    if (nlls[j] < nlls[best]) best = j;
  }
  return best;
}

MixturePrediction predict(const MixtureModel& model, const Matrix& context_inputs, const Vector& context_y,
                          const Matrix& query_inputs) {
  MixturePrediction out;
  out.cluster = infer_cluster(model, context_inputs, context_y);
  out.predictive = posterior_predictive(model.cluster_prior(out.cluster), context_inputs, context_y, query_inputs);
  return out;
}

}  // namespace unlimitd
