#include <benchmark/benchmark.h>

#include "unlimitd/eval.hpp"
#include "unlimitd/fim_sketch.hpp"
#include "unlimitd/gp.hpp"
#include "unlimitd/network.hpp"
#include "unlimitd/trainer.hpp"

using namespace unlimitd;

namespace {

ParamVector default_theta() {
  Rng rng(1);
  return ParamVector::he_init(NetworkSpec::default_regressor(), rng);
}

std::vector<SampledTask> sine_batch(int n, int k) {
  TaskStreams streams(2);
  return TaskSampler({TaskKind::Sine}).sample(n, k, streams);
}

MixtureModel projected_model(int alpha) {
  const ParamVector theta = default_theta();
  const Eigen::Index p = theta.size();
  auto q = std::make_shared<const Matrix>(random_projection(p, 10, 3));
  std::vector<MixtureCluster> clusters(static_cast<std::size_t>(alpha), {Vector::Zero(p), Vector::Ones(10)});
  return {theta, q, clusters, kContextNoiseStd};
}

}  // namespace

// Arg: number of inputs K.
static void BM_Jacobian(benchmark::State& state) {
  const ParamVector theta = default_theta();
  Rng rng(4);
  const Matrix x = rng.uniform_matrix(1, state.range(0), kInputLow, kInputHigh);
  for (auto _ : state) benchmark::DoNotOptimize(jacobian(theta, x));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Jacobian)->Arg(1)->Arg(10)->Arg(100);

static void BM_JacobianPullback(benchmark::State& state) {
  const ParamVector theta = default_theta();
  Rng rng(5);
  const Matrix x = rng.uniform_matrix(1, state.range(0), kInputLow, kInputHigh);
  const Matrix g = rng.normal_matrix(state.range(0), theta.size());
  for (auto _ : state) benchmark::DoNotOptimize(jacobian_pullback(theta, x, g));
}
BENCHMARK(BM_JacobianPullback)->Arg(1)->Arg(10);

static void BM_Nll(benchmark::State& state) {
  const MixtureModel model = projected_model(1);
  const GaussianTaskPrior prior = model.cluster_prior(0);
  const SampledTask task = sine_batch(1, static_cast<int>(state.range(0)))[0];
  for (auto _ : state) benchmark::DoNotOptimize(nll(prior, task.context.x, task.context.y));
}
BENCHMARK(BM_Nll)->Arg(10)->Arg(100);

static void BM_PosteriorPredictive(benchmark::State& state) {
  const GaussianTaskPrior prior = projected_model(1).cluster_prior(0);
  const SampledTask task = sine_batch(1, 10)[0];
  Rng rng(6);
  const Matrix xq = rng.uniform_matrix(1, state.range(0), kInputLow, kInputHigh);
  for (auto _ : state) benchmark::DoNotOptimize(posterior_predictive(prior, task.context.x, task.context.y, xq));
}
BENCHMARK(BM_PosteriorPredictive)->Arg(10)->Arg(100);

// One training step's loss and gradients: n = 24 tasks at K = 10. Arg: alpha.
static void BM_LossAndGrad(benchmark::State& state) {
  const MixtureModel model = projected_model(static_cast<int>(state.range(0)));
  const auto batch = sine_batch(24, 10);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(model, batch));
}
BENCHMARK(BM_LossAndGrad)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

static void BM_FimSketchUpdate(benchmark::State& state) {
  const ParamVector theta = default_theta();
  Rng rng(7);
  const Matrix jac = jacobian(theta, rng.uniform_matrix(1, state.range(0), kInputLow, kInputHigh));
  FimSketch sketch = FimSketch::init(theta.size(), 10, 8);
  for (auto _ : state) sketch.update(jac, 100);
}
BENCHMARK(BM_FimSketchUpdate)->Arg(10)->Arg(512);

static void BM_FixedRankSymApprox(benchmark::State& state) {
  const ParamVector theta = default_theta();
  FimSketch sketch = FimSketch::init(theta.size(), 10, 9);
  for (const Matrix& x : auxiliary_fim_inputs(20, 50, 10)) sketch.update(jacobian(theta, x), 20);
  for (auto _ : state) benchmark::DoNotOptimize(fixed_rank_sym_approx(sketch, 10));
}
BENCHMARK(BM_FixedRankSymApprox)->Unit(benchmark::kMillisecond);

static void BM_AucMannWhitney(benchmark::State& state) {
  Rng rng(11);
  std::vector<double> in(static_cast<std::size_t>(state.range(0))), ood(in.size());
  for (double& v : in) v = rng.normal();
  for (double& v : ood) v = rng.normal(0.5);
  for (auto _ : state) benchmark::DoNotOptimize(auc_mann_whitney(in, ood));
}
BENCHMARK(BM_AucMannWhitney)->Arg(200)->Arg(1000);

BENCHMARK_MAIN();
