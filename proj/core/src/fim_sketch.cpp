#include "unlimitd/fim_sketch.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <string>

#include "unlimitd/errors.hpp"
#include "unlimitd/parallel.hpp"
#include "unlimitd/rng.hpp"

namespace unlimitd {

FimSketch FimSketch::init(Eigen::Index param_count, int s, std::uint64_t seed) {
  if (s < 1) throw ContractViolation("init_sketch: subspace size must be >= 1");
  if (6 * static_cast<Eigen::Index>(s) + 4 > param_count) {
    throw ContractViolation("init_sketch: sketch budget 6s+4=" + std::to_string(6 * s + 4) +
                            " exceeds parameter count " + std::to_string(param_count));
  }
  FimSketch sk;
  sk.s_ = s;
  Rng rng(seed);
  sk.omega_ = rng.normal_matrix(2 * s + 1, param_count);
  sk.psi_ = rng.normal_matrix(4 * s + 3, param_count);
  sk.y_ = Matrix::Zero(param_count, 2 * s + 1);
  sk.w_ = Matrix::Zero(4 * s + 3, param_count);
  return sk;
}

void FimSketch::update(const Matrix& jac, std::size_t total_tasks) {
  if (jac.cols() != param_count()) {
    throw ContractViolation("update_sketch: Jacobian has " + std::to_string(jac.cols()) + " columns, sketch expects " +
                            std::to_string(param_count()));
  }
  if (total_tasks == 0) throw ContractViolation("update_sketch: total task count must be positive");
  const double scale = 1.0 / static_cast<double>(total_tasks);
  const Matrix j_omega = jac * omega_.transpose();  // M x k
  const Matrix psi_j = psi_ * jac.transpose();      // l x M
  y_.noalias() += scale * (jac.transpose() * j_omega);
  w_.noalias() += scale * (psi_j * jac);
  ++tasks_seen_;
}

ProjectionBasis fixed_rank_sym_approx(const FimSketch& sketch, int s) {
  if (sketch.tasks_seen() == 0) throw ContractViolation("fixed_rank_sym_approx: sketch is empty");
  if (s < 1 || s > sketch.k()) throw ContractViolation("fixed_rank_sym_approx: s outside [1, k]");

  const Matrix u = orthonormalize_columns(sketch.range_sketch());  // P x k
  const Matrix psi_u = sketch.psi() * u;                          // l x k
  const Matrix w_u = sketch.corange_sketch() * u;                 // l x k

  Eigen::ColPivHouseholderQR<Matrix> qr(psi_u);
  qr.setThreshold(1e-10);
  if (qr.rank() < psi_u.cols()) {
    throw SketchRankError("fixed_rank_sym_approx: Psi U has rank " + std::to_string(qr.rank()) + " < " +
                          std::to_string(psi_u.cols()));
  }
  const Matrix core = qr.solve(w_u);  // ~ U^T F U
  const Matrix sym = 0.5 * (core + core.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(sym);
  const Eigen::Index k = sym.rows();
  Matrix top(sketch.param_count(), s);
  ProjectionBasis out;
  out.eigenvalues.resize(s);
  for (int i = 0; i < s; ++i) {
    const Eigen::Index src = k - 1 - i;  // eigenvalues come back ascending
    top.col(i) = u * eig.eigenvectors().col(src);
    out.eigenvalues[i] = std::max(0.0, eig.eigenvalues()[src]);
  }
  out.q = orthonormalize_columns(top).transpose();
  return out;
}

namespace {

FimSketch accumulate(const ParamVector& theta0, const std::vector<Matrix>& task_inputs, int s, std::uint64_t seed) {
  FimSketch sketch = FimSketch::init(theta0.size(), s, seed);
  const std::size_t n = task_inputs.size();
  const std::size_t chunk = std::max<std::size_t>(1, thread_count());
  std::vector<Matrix> jacs(chunk);
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t count = std::min(chunk, n - start);
    parallel_for(count, [&](std::size_t i) { jacs[i] = jacobian(theta0, task_inputs[start + i]); });
    for (std::size_t i = 0; i < count; ++i) sketch.update(jacs[i], n);
  }
  return sketch;
}

}  // namespace

ProjectionBasis fim_projection(const ParamVector& theta0, const std::vector<Matrix>& task_inputs, int s,
                               std::uint64_t seed) {
  if (task_inputs.empty()) throw ContractViolation("fim_projection: no tasks");
  try {
    return fixed_rank_sym_approx(accumulate(theta0, task_inputs, s, seed), s);
  } catch (const SketchRankError&) {
    return fixed_rank_sym_approx(accumulate(theta0, task_inputs, s, derive_seed(seed, 0x5e7c4)), s);
  }
}

}  // namespace unlimitd
