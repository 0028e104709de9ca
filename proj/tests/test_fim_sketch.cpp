#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <numbers>

#include "oracles.hpp"
#include "unlimitd/errors.hpp"
#include "unlimitd/fim_sketch.hpp"

using namespace unlimitd;

namespace {

// Random orthonormal P x P basis.
Matrix random_orthogonal(Eigen::Index p, Rng& rng) {
  const Eigen::HouseholderQR<Matrix> qr(rng.normal_matrix(p, p));
  return qr.householderQ() * Matrix::Identity(p, p);
}

// Jacobian whose Gram J^T J has eigenvectors V and eigenvalues `lambda`.
Matrix jacobian_with_spectrum(const Matrix& v, const Vector& lambda) {
  return lambda.cwiseSqrt().asDiagonal() * v.transpose();
}

FimSketch sketch_of(const std::vector<Matrix>& jacs, Eigen::Index p, int s, std::uint64_t seed) {
  FimSketch sk = FimSketch::init(p, s, seed);
  for (const Matrix& j : jacs) sk.update(j, jacs.size());
  return sk;
}

Matrix dense_fim(const std::vector<Matrix>& jacs) {
  Matrix f = Matrix::Zero(jacs[0].cols(), jacs[0].cols());
  for (const Matrix& j : jacs) f += j.transpose() * j;
  return f / static_cast<double>(jacs.size());
}

}  // namespace

TEST(FimSketch, SketchSizesFollowSubspaceSize) {
  for (int s = 1; s <= 6; ++s) {
    const FimSketch sk = FimSketch::init(100, s, 1);
    EXPECT_EQ(sk.k(), 2 * s + 1);
    EXPECT_EQ(sk.l(), 4 * s + 3);
    EXPECT_EQ(sk.range_sketch().rows(), 100);
    EXPECT_EQ(sk.range_sketch().cols(), 2 * s + 1);
    EXPECT_EQ(sk.corange_sketch().rows(), 4 * s + 3);
    EXPECT_TRUE(sk.range_sketch().isZero(0.0));
  }
}

TEST(FimSketch, RejectsBadSizes) {
  EXPECT_THROW(FimSketch::init(100, 0, 1), ContractViolation);
  EXPECT_NO_THROW(FimSketch::init(28, 4, 1));
  EXPECT_THROW(FimSketch::init(27, 4, 1), ContractViolation);
  FimSketch sk = FimSketch::init(30, 2, 1);
  EXPECT_THROW(sk.update(Matrix::Zero(3, 29), 1), ContractViolation);
  EXPECT_THROW(sk.update(Matrix::Zero(3, 30), 0), ContractViolation);
  EXPECT_THROW(fixed_rank_sym_approx(sk, 2), ContractViolation);
}

TEST(FimSketch, TestMatricesAreSeeded) {
  const FimSketch a = FimSketch::init(50, 3, 42), b = FimSketch::init(50, 3, 42), c = FimSketch::init(50, 3, 43);
  EXPECT_EQ(a.omega(), b.omega());
  EXPECT_EQ(a.psi(), b.psi());
  EXPECT_NE(a.omega(), c.omega());
}

TEST(FimSketch, ZeroJacobianLeavesSketchUnchanged) {
  FimSketch sk = FimSketch::init(40, 2, 3);
  sk.update(Matrix::Zero(5, 40), 4);
  EXPECT_TRUE(sk.range_sketch().isZero(0.0));
  EXPECT_TRUE(sk.corange_sketch().isZero(0.0));
  EXPECT_EQ(sk.tasks_seen(), 1u);
}

TEST(FimSketch, MatchesDenseProducts) {
  Rng rng(4);
  const Eigen::Index p = 37;
  std::vector<Matrix> jacs;
  for (int i = 0; i < 6; ++i) jacs.push_back(rng.normal_matrix(3 + i, p));
  const FimSketch sk = sketch_of(jacs, p, 2, 9);
  const Matrix f = dense_fim(jacs);
  EXPECT_LT(oracle::max_rel_error(sk.range_sketch(), f * sk.omega().transpose()), 1e-10);
  EXPECT_LT(oracle::max_rel_error(sk.corange_sketch(), sk.psi() * f), 1e-10);
}

TEST(FimSketch, UpdateOrderDoesNotMatter) {
  Rng rng(5);
  const Eigen::Index p = 30;
  std::vector<Matrix> jacs;
  for (int i = 0; i < 5; ++i) jacs.push_back(rng.normal_matrix(4, p));
  const FimSketch a = sketch_of(jacs, p, 2, 1);
  std::reverse(jacs.begin(), jacs.end());
  const FimSketch b = sketch_of(jacs, p, 2, 1);
  EXPECT_LT(oracle::max_rel_error(a.range_sketch(), b.range_sketch()), 1e-12);
  EXPECT_LT(oracle::max_rel_error(a.corange_sketch(), b.corange_sketch()), 1e-12);
}

TEST(FixedRankSymApprox, RecoversExactLowRankMatrix) {
  Rng rng(6);
  const Eigen::Index p = 50;
  const int s = 3;
  const Matrix v = random_orthogonal(p, rng);
  Vector lambda = Vector::Zero(p);
  lambda.head(s) << 9.0, 4.0, 1.5;
  const FimSketch sk = sketch_of({jacobian_with_spectrum(v, lambda)}, p, s, 11);
  const ProjectionBasis basis = fixed_rank_sym_approx(sk, s);
  EXPECT_LT(oracle::largest_principal_angle(basis.q, v.leftCols(s).transpose()), 1e-6);
  EXPECT_LT(oracle::max_rel_error(basis.eigenvalues, lambda.head(s)), 1e-8);
  EXPECT_LT(oracle::max_rel_error(basis.q * basis.q.transpose(), Matrix::Identity(s, s)), 1e-12);
}

TEST(FixedRankSymApprox, RankOneRecovery) {
  Rng rng(7);
  const Eigen::Index p = 20;
  const Vector g = rng.normal_vector(p);
  const FimSketch sk = sketch_of({Matrix(g.transpose())}, p, 1, 3);
  const ProjectionBasis basis = fixed_rank_sym_approx(sk, 1);
  EXPECT_NEAR(std::abs(basis.q.row(0).dot(g.normalized())), 1.0, 1e-10);
  EXPECT_NEAR(basis.eigenvalues[0], g.squaredNorm(), 1e-8 * g.squaredNorm());
}

TEST(FixedRankSymApprox, SpectralGapGivesAccurateSubspace) {
  Rng rng(8);
  const Eigen::Index p = 60;
  const int s = 4;
  const Matrix v = random_orthogonal(p, rng);
  Vector lambda(p);
  for (Eigen::Index i = 0; i < p; ++i) lambda[i] = i < s ? 100.0 / (1.0 + i) : 0.05 * std::pow(0.9, i - s);
  const Matrix j = jacobian_with_spectrum(v, lambda);
  const ProjectionBasis basis = fixed_rank_sym_approx(sketch_of({j}, p, s, 12), s);
  EXPECT_LT(oracle::largest_principal_angle(basis.q, v.leftCols(s).transpose()), 5.0 * std::numbers::pi / 180.0);
  for (int i = 0; i < s; ++i) EXPECT_NEAR(basis.eigenvalues[i], lambda[i], 0.1 * lambda[i]);
}

TEST(FixedRankSymApprox, ScalingTheJacobianScalesEigenvaluesOnly) {
  Rng rng(9);
  const Eigen::Index p = 40;
  const Matrix j = rng.normal_matrix(6, p);
  const ProjectionBasis a = fixed_rank_sym_approx(sketch_of({j}, p, 3, 5), 3);
  const ProjectionBasis b = fixed_rank_sym_approx(sketch_of({Matrix(3.0 * j)}, p, 3, 5), 3);
  EXPECT_LT(oracle::largest_principal_angle(a.q, b.q), 1e-6);
  EXPECT_LT(oracle::max_rel_error(b.eigenvalues, 9.0 * a.eigenvalues), 1e-8);
}

TEST(FimProjection, NetworkFimCapturesDominantEnergy) {
  const NetworkSpec spec({1, 6, 6, 1}, Activation::ReLU);
  Rng rng(10);
  const ParamVector theta0 = ParamVector::he_init(spec, rng);
  std::vector<Matrix> inputs;
  std::vector<Matrix> jacs;
  for (int i = 0; i < 20; ++i) {
    inputs.push_back(rng.uniform_matrix(1, 15, -5, 5));
    jacs.push_back(oracle::fd_network_jacobian(theta0, inputs.back()));
  }
  const int s = 3;
  const ProjectionBasis basis = fim_projection(theta0, inputs, s, 77);
  const Matrix f = dense_fim(jacs);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(f);
  const double top = eig.eigenvalues().tail(s).sum();
  const double captured = (basis.q * f * basis.q.transpose()).trace();
  EXPECT_GT(captured, 0.9 * top);
  EXPECT_LE(captured, top * (1.0 + 1e-6));
  EXPECT_LT(oracle::max_rel_error(basis.q * basis.q.transpose(), Matrix::Identity(s, s)), 1e-12);
}

TEST(FimProjection, SeededAndDeterministic) {
  const NetworkSpec spec({1, 6, 6, 1}, Activation::ReLU);
  Rng rng(11);
  const ParamVector theta0 = ParamVector::he_init(spec, rng);
  std::vector<Matrix> inputs;
  for (int i = 0; i < 8; ++i) inputs.push_back(rng.uniform_matrix(1, 10, -5, 5));
  const ProjectionBasis a = fim_projection(theta0, inputs, 2, 3);
  const ProjectionBasis b = fim_projection(theta0, inputs, 2, 3);
  EXPECT_EQ(a.q, b.q);
  EXPECT_EQ(a.eigenvalues, b.eigenvalues);
}

TEST(FisherInformation, KlMatchesQuadraticFormForSmallSteps) {
  // KL between N(f(theta), sigma^2 I) and N(f(theta + d), sigma^2 I),
  // averaged over tasks, against (1/2) d^T F d with F = sigma^-2 mean J^T J.
  const NetworkSpec spec({1, 8, 8, 1}, Activation::ReLU);
  Rng rng(12);
  const ParamVector theta = ParamVector::he_init(spec, rng);
  const double sigma = 0.1;
  std::vector<Matrix> inputs, jacs;
  for (int i = 0; i < 5; ++i) {
    inputs.push_back(rng.uniform_matrix(1, 12, -5, 5));
    jacs.push_back(jacobian(theta, inputs.back()));
  }
  const Matrix f = dense_fim(jacs) / (sigma * sigma);
  const Vector dir = rng.normal_vector(spec.param_count()).normalized();
  for (double eps : {1e-3, 1e-4, 1e-5}) {
    const Vector d = eps * dir;
    const ParamVector moved(spec, theta.values() + d);
    double kl = 0.0;
    for (const Matrix& x : inputs) {
      const Matrix diff = oracle::forward(moved, x) - oracle::forward(theta, x);
      kl += 0.5 * diff.squaredNorm() / (sigma * sigma);
    }
    kl /= static_cast<double>(inputs.size());
    EXPECT_NEAR(kl / (0.5 * d.dot(f * d)), 1.0, 1e-2) << "eps " << eps;
  }
}
