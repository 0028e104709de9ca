#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "unlimitd/errors.hpp"
#include "unlimitd/gp.hpp"
#include "unlimitd/trainer.hpp"

using namespace unlimitd;

namespace {

const NetworkSpec kNet({1, 6, 6, 1}, Activation::ReLU);  // P = 61

GaussianTaskPrior random_prior(Rng& rng, bool low_rank, int s = 5, double sigma = 0.1) {
  const ParamVector theta0 = oracle::random_params(kNet, rng, 0.8);
  const Eigen::Index p = kNet.param_count();
  const Vector mu = rng.normal_vector(p, 0.3);
  CovarianceParam cov = CovarianceParam::identity();
  if (low_rank) {
    cov = CovarianceParam::low_rank(random_projection(p, s, rng.index(1u << 30)), rng.normal_vector(s, 1.5));
  }
  return {theta0, mu, cov, sigma};
}

// The oracles below take the library Jacobian as the feature map (its
// correctness is pinned separately against finite differences) and redo the
// Gaussian algebra densely in weight space.
oracle::WeightSpaceBlr blr_of(const GaussianTaskPrior& prior) {
  return {prior.mu, oracle::covariance_factor(prior.cov, prior.theta0.size()), prior.sigma_eps};
}

}  // namespace

TEST(CovarianceParam, ValidatesOrthonormalRows) {
  Matrix q = Matrix::Zero(2, 5);
  q(0, 0) = 1.0;
  q(1, 1) = 2.0;
  EXPECT_THROW(CovarianceParam::low_rank(q, Vector::Ones(2)), ContractViolation);
  q(1, 1) = 1.0;
  EXPECT_THROW(CovarianceParam::low_rank(q, Vector::Ones(3)), ContractViolation);
  EXPECT_NO_THROW(CovarianceParam::low_rank(q, Vector::Ones(2)));
}

TEST(GaussianTaskPrior, ValidatesShapesAndNoise) {
  Rng rng(1);
  const ParamVector theta0 = oracle::random_params(kNet, rng);
  EXPECT_THROW(GaussianTaskPrior(theta0, Vector::Zero(3), CovarianceParam::identity(), 0.1), ContractViolation);
  EXPECT_THROW(GaussianTaskPrior(theta0, Vector::Zero(kNet.param_count()), CovarianceParam::identity(), 0.0),
               ContractViolation);
}

TEST(Kernel, IdentityCovarianceIsNtkGram) {
  Rng rng(2);
  const GaussianTaskPrior prior = random_prior(rng, false);
  const Matrix x1 = rng.uniform_matrix(1, 4, -5, 5), x2 = rng.uniform_matrix(1, 3, -5, 5);
  const Matrix expected = jacobian(prior.theta0, x1) * jacobian(prior.theta0, x2).transpose();
  EXPECT_EQ(kernel(prior, x1, x2), expected);
}

TEST(Kernel, ZeroScalesGiveZeroKernel) {
  Rng rng(3);
  GaussianTaskPrior prior = random_prior(rng, true);
  prior.cov = CovarianceParam::low_rank(prior.cov.shared_projection(), Vector::Zero(prior.cov.rank()));
  const Matrix x = rng.uniform_matrix(1, 4, -5, 5);
  EXPECT_EQ(kernel(prior, x, x).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Kernel, FullRankIdentityProjectionMatchesDenseCovariance) {
  Rng rng(4);
  const Eigen::Index p = kNet.param_count();
  const ParamVector theta0 = oracle::random_params(kNet, rng);
  const Vector s = rng.normal_vector(p);
  const GaussianTaskPrior prior(theta0, Vector::Zero(p), CovarianceParam::low_rank(Matrix::Identity(p, p), s), 0.1);
  const Matrix x = rng.uniform_matrix(1, 5, -5, 5);
  const Matrix jac = jacobian(theta0, x);
  const Matrix dense = jac * s.array().square().matrix().asDiagonal() * jac.transpose();
  EXPECT_LT((kernel(prior, x, x) - dense).cwiseAbs().maxCoeff(), 1e-10 * dense.cwiseAbs().maxCoeff());
}

TEST(Kernel, FactoredLowRankMatchesDenseSigma) {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const GaussianTaskPrior prior = random_prior(rng, true);
    const Matrix x1 = rng.uniform_matrix(1, 4, -5, 5), x2 = rng.uniform_matrix(1, 6, -5, 5);
    const Matrix& q = prior.cov.projection();
    const Matrix sigma = q.transpose() * prior.cov.scales().array().square().matrix().asDiagonal() * q;
    const Matrix dense = jacobian(prior.theta0, x1) * sigma * jacobian(prior.theta0, x2).transpose();
    EXPECT_LT((kernel(prior, x1, x2) - dense).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(PriorPredictive, ZeroMeanAndNoiseOnDiagonal) {
  Rng rng(6);
  GaussianTaskPrior prior = random_prior(rng, true, 5, 0.05);
  prior.mu.setZero();
  const Matrix x = rng.uniform_matrix(1, 5, -5, 5);
  const PredictiveGaussian pp = prior_predictive(prior, x);
  EXPECT_EQ(pp.mean.cwiseAbs().maxCoeff(), 0.0);
  const Matrix k = kernel(prior, x, x);
  for (Eigen::Index i = 0; i < 5; ++i) EXPECT_EQ(pp.cov(i, i), k(i, i) + 0.0025);
}

TEST(PriorPredictive, MatchesWeightSpaceOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    const GaussianTaskPrior prior = random_prior(rng, trial % 2 == 0);
    const Matrix x = rng.uniform_matrix(1, 6, -5, 5);
    const Matrix jac = jacobian(prior.theta0, x);
    const auto blr = blr_of(prior);
    const PredictiveGaussian pp = prior_predictive(prior, x);
    EXPECT_LT((pp.mean - blr.prior_mean(jac)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((pp.cov - blr.prior_cov(jac)).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(Nll, StandardNormalDegenerateCase) {
  Rng rng(8);
  const Vector y = rng.normal_vector(7);
  const NllTerms t = nll_terms(Matrix::Zero(7, 4), nullptr, CovarianceParam::identity(), Vector::Zero(4), y, 1.0, false);
  EXPECT_NEAR(t.value, 0.5 * (y.squaredNorm() + 7 * std::log(2 * std::numbers::pi)), 1e-12);
}

TEST(Nll, SinglePointScalarFormula) {
  Rng rng(9);
  const GaussianTaskPrior prior = random_prior(rng, true);
  const Matrix x = Matrix::Constant(1, 1, 1.3);
  const PredictiveGaussian pp = prior_predictive(prior, x);
  const double m = pp.mean[0], v = pp.cov(0, 0), y = 0.7;
  EXPECT_NEAR(nll(prior, x, Vector::Constant(1, y)),
              0.5 * ((y - m) * (y - m) / v + std::log(v) + std::log(2 * std::numbers::pi)), 1e-12);
}

TEST(Nll, MatchesDenseGaussianLogDensity) {
  Rng rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const GaussianTaskPrior prior = random_prior(rng, trial % 2 == 1);
    const Matrix x = rng.uniform_matrix(1, 8, -5, 5);
    const Vector y = rng.normal_vector(8, 2.0);
    const double expected = blr_of(prior).nll(jacobian(prior.theta0, x), y);
    EXPECT_NEAR(nll(prior, x, y), expected, 1e-8);
  }
}

TEST(Nll, InvariantToPermutingContextPoints) {
  Rng rng(11);
  const GaussianTaskPrior prior = random_prior(rng, true);
  const Matrix x = rng.uniform_matrix(1, 6, -5, 5);
  const Vector y = rng.normal_vector(6);
  const std::vector<int> perm{3, 0, 5, 1, 4, 2};
  Matrix xp(1, 6);
  Vector yp(6);
  for (int i = 0; i < 6; ++i) {
    xp(0, i) = x(0, perm[i]);
    yp[i] = y[perm[i]];
  }
  EXPECT_NEAR(nll(prior, x, y), nll(prior, xp, yp), 1e-10);
}

TEST(Nll, RejectsWrongOutputLength) {
  Rng rng(12);
  const GaussianTaskPrior prior = random_prior(rng, false);
  EXPECT_THROW(nll(prior, rng.uniform_matrix(1, 3, -5, 5), Vector::Zero(4)), ContractViolation);
}

TEST(PosteriorPredictive, MatchesWeightSpacePosterior) {
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    const GaussianTaskPrior prior = random_prior(rng, trial % 2 == 0);
    const Matrix xc = rng.uniform_matrix(1, 5, -5, 5), xq = rng.uniform_matrix(1, 7, -5, 5);
    const Vector yc = rng.normal_vector(5, 2.0);
    Vector mean;
    Matrix cov;
    blr_of(prior).posterior(jacobian(prior.theta0, xc), yc,
                            jacobian(prior.theta0, xq), mean, cov);
    const PredictiveGaussian post = posterior_predictive(prior, xc, yc, xq);
    EXPECT_LT((post.mean - mean).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LT((post.cov - cov).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(PosteriorPredictive, InterpolatesContextAsNoiseVanishes) {
  Rng rng(14);
  const ParamVector theta0 = ParamVector::he_init(NetworkSpec::default_regressor(), rng);
  const GaussianTaskPrior prior(theta0, Vector::Zero(theta0.size()), CovarianceParam::identity(), 1e-6);
  // Two points keep the NTK Gram matrix well conditioned: inputs sharing a
  // ReLU linear region have affinely dependent Jacobian rows.
  Matrix x(1, 2);
  x << -2.5, 3.0;
  const Vector y = rng.normal_vector(2);
  const PredictiveGaussian post = posterior_predictive(prior, x, y, x);
  EXPECT_LT((post.mean - y).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(PosteriorPredictive, ConditioningNeverIncreasesVariance) {
  Rng rng(15);
  for (int trial = 0; trial < 100; ++trial) {
    const GaussianTaskPrior prior = random_prior(rng, trial % 2 == 0);
    const Matrix xc = rng.uniform_matrix(1, 4, -5, 5), xq = rng.uniform_matrix(1, 3, -5, 5);
    const Vector yc = rng.normal_vector(4);
    const Matrix prior_cov = kernel(prior, xq, xq);
    const Vector v3 = posterior_predictive(prior, xc.leftCols(3), yc.head(3), xq).cov.diagonal();
    const Vector v4 = posterior_predictive(prior, xc, yc, xq).cov.diagonal();
    for (Eigen::Index i = 0; i < 3; ++i) {
      const double tol = 1e-9 * std::max(1.0, prior_cov(i, i));
      EXPECT_LE(v3[i], prior_cov(i, i) + tol);
      EXPECT_LE(v4[i], v3[i] + tol);
    }
  }
}

TEST(PosteriorPredictive, CovarianceIsSymmetric) {
  Rng rng(16);
  const GaussianTaskPrior prior = random_prior(rng, true);
  const PredictiveGaussian post =
      posterior_predictive(prior, rng.uniform_matrix(1, 4, -5, 5), rng.normal_vector(4), rng.uniform_matrix(1, 5, -5, 5));
  EXPECT_EQ(post.cov, Matrix(post.cov.transpose()));
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(post.cov).eigenvalues().minCoeff(), -1e-8);
}

TEST(FactorizeSpd, SingularMatrixNeedsJitter) {
  Vector v(3);
  v << 1, 2, 3;
  const Matrix a = v * v.transpose();
  const SpdFactor f = factorize_spd(a);
  EXPECT_GT(f.jitter, 0.0);
  EXPECT_LE(f.jitter, 1e-4 * a.diagonal().mean());
}

TEST(FactorizeSpd, IndefiniteMatrixReportsEveryJitter) {
  Matrix a = Matrix::Identity(3, 3);
  a(2, 2) = -1.0;
  try {
    factorize_spd(a);
    FAIL() << "expected ConditioningError";
  } catch (const ConditioningError& e) {
    const auto& j = e.attempted_jitters();
    ASSERT_EQ(j.size(), 7u);
    const double mean_diag = 1.0 / 3.0;
    EXPECT_DOUBLE_EQ(j.front(), 1e-10 * mean_diag);
    EXPECT_NEAR(j.back(), 1e-4 * mean_diag, 1e-18);
  }
}

TEST(FactorizeSpd, LogDetOfWellConditionedMatrix) {
  Matrix a(2, 2);
  a << 4, 1, 1, 3;
  EXPECT_NEAR(factorize_spd(a).log_det(), std::log(11.0), 1e-14);
}
