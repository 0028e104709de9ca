#include "unlimitd/maml.hpp"

#include "unlimitd/errors.hpp"
#include "unlimitd/gp.hpp"
#include "unlimitd/parallel.hpp"

namespace unlimitd {
namespace {

constexpr std::uint64_t kInitStream = 30;
constexpr std::uint64_t kTaskStream = 31;
constexpr std::uint64_t kFiniteStream = 32;

struct MetaTask {
  ContextBatch context;
  ContextBatch query;
};

}  // namespace

void MamlConfig::validate() const {
  if (inner_lr < 0.0 || meta_lr < 0.0) throw ContractViolation("MAML learning rates must be >= 0");
  if (inner_steps_train < 0 || inner_steps_test < 0) throw ContractViolation("MAML inner steps must be >= 0");
  if (epochs < 0 || tasks_per_epoch < 1 || context_size < 1 || query_size < 1) {
    throw ContractViolation("MAML epochs, tasks, context and query sizes must be positive");
  }
  if (clusters.empty()) throw ContractViolation("at least one task cluster is required");
  (void)network();
}

double mse(const ParamVector& theta, const Matrix& inputs, const Vector& y) {
  const Vector pred = vectorize(forward(theta, inputs));
  if (pred.size() != y.size()) throw ContractViolation("mse: target length mismatch");
  return (pred - y).squaredNorm() / static_cast<double>(y.size());
}

Vector mse_gradient(const ParamVector& theta, const Matrix& inputs, const Vector& y) {
  const Matrix pred = forward(theta, inputs);
  if (pred.size() != y.size()) throw ContractViolation("mse_gradient: target length mismatch");
  const Matrix residual = pred - Eigen::Map<const Matrix>(y.data(), pred.rows(), pred.cols());
  return output_pullback(theta, inputs, (2.0 / static_cast<double>(y.size())) * residual);
}

ParamVector inner_adapt(const ParamVector& theta, const Matrix& context_inputs, const Vector& context_y, int steps,
                        double inner_lr) {
  if (context_inputs.cols() < 1) throw ContractViolation("inner_adapt: empty context");
  ParamVector adapted = theta;
  for (int i = 0; i < steps; ++i) {
    adapted.mutable_values() -= inner_lr * mse_gradient(adapted, context_inputs, context_y);
  }
  return adapted;
}

MamlState initial_maml_state(const MamlConfig& config) {
  config.validate();
  MamlState s;
  s.config = config;
  Rng init(derive_seed(config.seed, kInitStream));
  s.theta = ParamVector::he_init(config.network(), init).values();
  s.adam = AdamState::zeros(s.theta.size());
  const TaskStreams streams(derive_seed(config.seed, kTaskStream));
  s.rng_task = streams.task.state();
  s.rng_input = streams.input.state();
  s.rng_noise = streams.noise.state();
  s.rng_finite = Rng(derive_seed(config.seed, kFiniteStream)).state();
  return s;
}

MamlResult meta_train(const MamlConfig& config, const TrainingData& data, std::optional<MamlState> resume) {
  config.validate();
  MamlResult result;
  MamlState state = resume ? std::move(*resume) : initial_maml_state(config);
  if (resume && !(state.config.network() == config.network())) {
    throw ContractViolation("resume: MAML checkpoint architecture differs from the configuration");
  }
  state.config = config;

  TaskStreams streams(0);
  streams.task.restore(state.rng_task);
  streams.input.restore(state.rng_input);
  streams.noise.restore(state.rng_noise);
  Rng finite_rng;
  finite_rng.restore(state.rng_finite);

  const NetworkSpec spec = config.network();
  while (state.epoch < config.epochs) {
    std::vector<MetaTask> tasks;
    if (const auto* finite = std::get_if<FiniteDataset>(&data)) {
      // Context and query come from the same frozen pool, as disjoint subsets.
      for (auto& t : finite->sample(config.tasks_per_epoch, config.context_size + config.query_size, finite_rng)) {
        MetaTask mt;
        mt.context.x = t.context.x.leftCols(config.context_size);
        mt.context.y = t.context.y.head(config.context_size);
        mt.query.x = t.context.x.rightCols(config.query_size);
        mt.query.y = t.context.y.tail(config.query_size);
        tasks.push_back(std::move(mt));
      }
    } else {
      for (auto& t : std::get<TaskSampler>(data).sample(config.tasks_per_epoch, config.context_size, streams)) {
        tasks.push_back({std::move(t.context), sample_queries(t.spec, config.query_size, streams.input)});
      }
    }

    const ParamVector theta(spec, state.theta);
    std::vector<Vector> grads(tasks.size());
    std::vector<double> losses(tasks.size());
    parallel_for(tasks.size(), [&](std::size_t i) {
      const ParamVector adapted =
          inner_adapt(theta, tasks[i].context.x, tasks[i].context.y, config.inner_steps_train, config.inner_lr);
      grads[i] = mse_gradient(adapted, tasks[i].query.x, tasks[i].query.y);
      losses[i] = mse(adapted, tasks[i].query.x, tasks[i].query.y);
    });
    Vector meta_grad = Vector::Zero(state.theta.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < tasks.size(); ++i) {
      meta_grad += grads[i];
      loss += losses[i];
    }
    const double inv_n = 1.0 / static_cast<double>(tasks.size());
    meta_grad *= inv_n;
    adam_step(state.theta, state.adam, meta_grad, config.meta_lr);
    ++state.epoch;
    result.trace.push_back({state.epoch, loss * inv_n});
  }
  state.rng_task = streams.task.state();
  state.rng_input = streams.input.state();
  state.rng_noise = streams.noise.state();
  state.rng_finite = finite_rng.state();
  result.state = std::move(state);
  return result;
}

Vector maml_predict(const ParamVector& theta, const Matrix& context_inputs, const Vector& context_y,
                    const Matrix& query_inputs, const MamlConfig& config) {
  const ParamVector adapted = inner_adapt(theta, context_inputs, context_y, config.inner_steps_test, config.inner_lr);
  return vectorize(forward(adapted, query_inputs));
}

}  // namespace unlimitd
