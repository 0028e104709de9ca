#include "unlimitd/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "unlimitd/errors.hpp"
#include "unlimitd/fim_sketch.hpp"
#include "unlimitd/parallel.hpp"

namespace unlimitd {
namespace {

// Stream ids for derive_seed; fixed so checkpoints stay replayable.
constexpr std::uint64_t kInitStream = 10;
constexpr std::uint64_t kProjectionStream = 11;
constexpr std::uint64_t kScaleStream = 12;
constexpr std::uint64_t kSketchStream = 13;
constexpr std::uint64_t kAuxInputStream = 14;
constexpr std::uint64_t kTaskStream = 20;
constexpr std::uint64_t kFiniteStream = 21;

}  // namespace

const char* to_string(Variant v) {
  switch (v) {
    case Variant::I:
      return "i";
    case Variant::R:
      return "r";
    case Variant::F:
      return "f";
  }
  return "?";
}

Variant variant_from_string(const std::string& name) {
  if (name == "i" || name == "I") return Variant::I;
  if (name == "r" || name == "R") return Variant::R;
  if (name == "f" || name == "F") return Variant::F;
  throw ContractViolation("unknown variant '" + name + "' (expected i, r or f)");
}

int FimAuxConfig::resolved_points(Eigen::Index param_count) const {
  if (m_points > 0) return m_points;
  return static_cast<int>(std::min<Eigen::Index>(param_count, m_cap));
}

void TrainConfig::validate() const {
  if (alpha < 1) throw ContractViolation("alpha must be >= 1");
  if (variant == Variant::I && alpha > 1) {
    throw ContractViolation(
        "variant i cannot be combined with alpha > 1: an identity prior covariance gives every cluster the same "
        "covariance function, so the mixture cannot tell clusters apart");
  }
  if (epochs < 0) throw ContractViolation("epochs must be >= 0");
  if (tasks_per_epoch < alpha) throw ContractViolation("tasks_per_epoch must be >= alpha");
  if (context_size < 1) throw ContractViolation("context_size must be >= 1");
  if (learning_rate < 0.0) throw ContractViolation("learning_rate must be >= 0");
  if (!(sigma_eps > 0.0)) throw ContractViolation("sigma_eps must be positive");
  if (clusters.empty()) throw ContractViolation("at least one task cluster is required");
  const NetworkSpec spec = network();
  if (variant != Variant::I) {
    if (subspace_size < 1 || subspace_size > spec.param_count()) {
      throw ContractViolation("subspace_size must lie in [1, P]");
    }
    if (variant == Variant::F && 6 * static_cast<Eigen::Index>(subspace_size) + 4 > spec.param_count()) {
      throw ContractViolation("subspace_size too large for the Fisher sketch (need 6s+4 <= P)");
    }
  }
  if (fim_aux.n_tasks < 1 || fim_aux.m_cap < 1 || fim_aux.m_points < 0) {
    throw ContractViolation("fim_aux sizes must be positive");
  }
}

MixtureModel Checkpoint::model() const {
  ParamVector theta(config.network(), theta0);
  std::vector<MixtureCluster> clusters;
  clusters.reserve(mus.size());
  for (std::size_t j = 0; j < mus.size(); ++j) {
    clusters.push_back({mus[j], projection ? s_vecs.at(j) : Vector()});
  }
  return {std::move(theta), projection, std::move(clusters), config.sigma_eps};
}

Matrix random_projection(Eigen::Index param_count, int s, std::uint64_t seed) {
  Rng rng(seed);
  return orthonormalize_rows(rng.normal_matrix(s, param_count));
}

LossAndGrad loss_and_grad(const MixtureModel& model, const std::vector<SampledTask>& batch) {
  const std::size_t alpha = model.num_clusters();
  const Eigen::Index p = model.theta0().size();
  const Eigen::Index s = model.has_projection() ? model.projection()->rows() : 0;

  struct TaskResult {
    double loss = 0.0;
    Vector grad_theta0;
    std::vector<Vector> grad_mu;
    std::vector<Vector> grad_s;
  };
  std::vector<TaskResult> results(batch.size());
  std::vector<CovarianceParam> covs;
  for (std::size_t j = 0; j < alpha; ++j) covs.push_back(model.cluster_covariance(j));

  parallel_for(batch.size(), [&](std::size_t i) {
    const ContextBatch& ctx = batch[i].context;
    const Matrix jac = jacobian(model.theta0(), ctx.x);
    Matrix projected;
    if (model.has_projection()) projected = jac * model.projection()->transpose();
    const Matrix* proj_ptr = model.has_projection() ? &projected : nullptr;

    TaskResult& r = results[i];
    r.grad_mu.resize(alpha);
    r.grad_s.resize(alpha);
    if (alpha == 1) {
      NllTerms t = nll_terms(jac, proj_ptr, covs[0], model.clusters()[0].mu, ctx.y, model.sigma_eps(), true);
      r.loss = t.value;
      r.grad_mu[0] = std::move(t.grad_mu);
      r.grad_s[0] = std::move(t.grad_s);
      r.grad_theta0 = jacobian_pullback(model.theta0(), ctx.x, t.grad_jac);
      return;
    }
    std::vector<NllTerms> terms;
    std::vector<double> nlls;
    terms.reserve(alpha);
    for (std::size_t j = 0; j < alpha; ++j) {
      terms.push_back(nll_terms(jac, proj_ptr, covs[j], model.clusters()[j].mu, ctx.y, model.sigma_eps(), true));
      nlls.push_back(terms.back().value);
    }
    r.loss = combine_cluster_nlls(nlls);
    const std::vector<double> w = cluster_responsibilities(nlls);
    Matrix grad_jac = Matrix::Zero(jac.rows(), jac.cols());
    for (std::size_t j = 0; j < alpha; ++j) {
      grad_jac += w[j] * terms[j].grad_jac;
      r.grad_mu[j] = w[j] * terms[j].grad_mu;
      r.grad_s[j] = w[j] * terms[j].grad_s;
    }
    r.grad_theta0 = jacobian_pullback(model.theta0(), ctx.x, grad_jac);
  });

  LossAndGrad out;
  out.grad_theta0 = Vector::Zero(p);
  out.grad_mu.assign(alpha, Vector::Zero(p));
  out.grad_s.assign(alpha, Vector::Zero(s));
  for (const TaskResult& r : results) {  // fixed order keeps the sum bit-reproducible
    out.loss += r.loss;
    out.grad_theta0 += r.grad_theta0;
    for (std::size_t j = 0; j < alpha; ++j) {
      out.grad_mu[j] += r.grad_mu[j];
      if (s > 0) out.grad_s[j] += r.grad_s[j];
    }
  }
  return out;
}

namespace {

std::vector<Vector> initial_scales(const TrainConfig& config) {
  std::vector<Vector> out;
  if (config.alpha == 1) {
    out.push_back(Vector::Ones(config.subspace_size));
    return out;
  }
  // Identical scales would keep every cluster's gradient identical forever.
  Rng rng(derive_seed(config.seed, kScaleStream));
  for (int j = 0; j < config.alpha; ++j) out.push_back(rng.normal_vector(config.subspace_size, std::sqrt(0.5)));
  return out;
}

Eigen::Index flat_size(const Checkpoint& c) {
  Eigen::Index n = c.theta0.size();
  for (const auto& m : c.mus) n += m.size();
  if (c.projection) {
    for (const auto& s : c.s_vecs) n += s.size();
  }
  return n;
}

Vector pack(const Vector& theta0, const std::vector<Vector>& mus, const std::vector<Vector>& scales, bool with_scales,
            Eigen::Index total) {
  Vector flat(total);
  Eigen::Index off = 0;
  flat.segment(off, theta0.size()) = theta0;
  off += theta0.size();
  for (const auto& m : mus) {
    flat.segment(off, m.size()) = m;
    off += m.size();
  }
  if (with_scales) {
    for (const auto& s : scales) {
      flat.segment(off, s.size()) = s;
      off += s.size();
    }
  }
  return flat;
}

void unpack(const Vector& flat, Checkpoint& c) {
  Eigen::Index off = 0;
  c.theta0 = flat.segment(off, c.theta0.size());
  off += c.theta0.size();
  for (auto& m : c.mus) {
    m = flat.segment(off, m.size());
    off += m.size();
  }
  if (c.projection) {
    for (auto& s : c.s_vecs) {
      s = flat.segment(off, s.size());
      off += s.size();
    }
  }
}

/// Phase 1 -> phase 2 of variant F: sketch the Fisher matrix at the current
/// theta0, freeze Q, replicate mu into every cluster and restart Adam.
void enter_projected_phase(Checkpoint& c, const TrainingData& data) {
  const TrainConfig& cfg = c.config;
  const ParamVector theta(cfg.network(), c.theta0);
  ProjectionBasis basis = fim_projection(theta, fisher_inputs(cfg, data), cfg.subspace_size, fisher_sketch_seed(cfg));
  c.projection = std::make_shared<const Matrix>(std::move(basis.q));
  c.fim_eigenvalues = std::move(basis.eigenvalues);
  const Vector mu = c.mus.front();
  c.mus.assign(cfg.alpha, mu);
  c.s_vecs = initial_scales(cfg);
  c.phase = TrainPhase::Projected;
  c.adam = AdamState::zeros(flat_size(c));
}

}  // namespace

std::vector<Matrix> fisher_inputs(const TrainConfig& config, const TrainingData& data) {
  if (const auto* finite = std::get_if<FiniteDataset>(&data)) return finite->all_inputs();
  return auxiliary_fim_inputs(config.fim_aux.n_tasks, config.fim_aux.resolved_points(config.network().param_count()),
                              derive_seed(config.seed, kAuxInputStream));
}

std::uint64_t fisher_sketch_seed(const TrainConfig& config) { return derive_seed(config.seed, kSketchStream); }

Checkpoint initial_checkpoint(const TrainConfig& config) {
  config.validate();
  const NetworkSpec spec = config.network();
  Checkpoint c;
  c.config = config;
  Rng init_rng(derive_seed(config.seed, kInitStream));
  c.theta0 = ParamVector::he_init(spec, init_rng).values();
  const Eigen::Index p = spec.param_count();
  if (config.variant == Variant::R) {
    c.phase = TrainPhase::Projected;
    c.projection = std::make_shared<const Matrix>(
        random_projection(p, config.subspace_size, derive_seed(config.seed, kProjectionStream)));
    c.mus.assign(config.alpha, Vector::Zero(p));
    c.s_vecs = initial_scales(config);
  } else {
    c.phase = TrainPhase::Identity;
    c.mus.assign(1, Vector::Zero(p));
  }
  c.adam = AdamState::zeros(flat_size(c));

  const TaskStreams streams(derive_seed(config.seed, kTaskStream));
  c.rng_task = streams.task.state();
  c.rng_input = streams.input.state();
  c.rng_noise = streams.noise.state();
  c.rng_finite = Rng(derive_seed(config.seed, kFiniteStream)).state();
  return c;
}

TrainResult train(const TrainConfig& config, const TrainingData& data, std::optional<Checkpoint> resume,
                  const TrainHooks& hooks) {
  config.validate();
  TrainResult result;
  Checkpoint state = resume ? std::move(*resume) : initial_checkpoint(config);
  if (resume) {
    if (!(state.config.network() == config.network()) || state.config.variant != config.variant ||
        state.config.alpha != config.alpha || state.config.seed != config.seed) {
      throw ContractViolation("resume: checkpoint does not match the training configuration");
    }
    state.config = config;
  }

  TaskStreams streams(0);
  streams.task.restore(state.rng_task);
  streams.input.restore(state.rng_input);
  streams.noise.restore(state.rng_noise);
  Rng finite_rng;
  finite_rng.restore(state.rng_finite);

  auto sync_rngs = [&] {
    state.rng_task = streams.task.state();
    state.rng_input = streams.input.state();
    state.rng_noise = streams.noise.state();
    state.rng_finite = finite_rng.state();
  };

  const int boundary = config.phase_boundary();
  while (state.epoch < config.epochs) {
    if (config.variant == Variant::F && state.phase == TrainPhase::Identity && state.epoch >= boundary) {
      sync_rngs();
      result.phase_boundary = state;
      enter_projected_phase(state, data);
    }

    std::vector<SampledTask> batch;
    if (const auto* finite = std::get_if<FiniteDataset>(&data)) {
      batch = finite->sample(config.tasks_per_epoch, config.context_size, finite_rng);
    } else {
      batch = std::get<TaskSampler>(data).sample(config.tasks_per_epoch, config.context_size, streams);
    }

    LossAndGrad lg;
    try {
      lg = loss_and_grad(state.model(), batch);
      state.consecutive_failures = 0;
    } catch (const ConditioningError& e) {
      if (++state.consecutive_failures >= 2) {
        throw ConditioningError("epoch " + std::to_string(state.epoch) +
                                    ": second consecutive conditioning failure: " + e.what(),
                                e.attempted_jitters());
      }
      ++result.skipped_batches;
      ++state.epoch;
      continue;
    }

    const Eigen::Index total = flat_size(state);
    const bool with_scales = state.projection != nullptr;
    Vector flat = pack(state.theta0, state.mus, state.s_vecs, with_scales, total);
    const Vector grad = pack(lg.grad_theta0, lg.grad_mu, lg.grad_s, with_scales, total);
    adam_step(flat, state.adam, grad, config.learning_rate);
    unpack(flat, state);
    ++state.epoch;

    const TraceEntry entry{state.epoch, lg.loss};
    result.trace.push_back(entry);
    if (hooks.on_epoch) hooks.on_epoch(entry);
    if (hooks.checkpoint_every > 0 && hooks.on_checkpoint && state.epoch % hooks.checkpoint_every == 0) {
      sync_rngs();
      hooks.on_checkpoint(state);
    }
  }
  sync_rngs();
  result.checkpoint = std::move(state);
  return result;
}

TrainResult train_unlimitd_i(const TrainConfig& config, const TrainingData& data) {
  if (config.variant != Variant::I) throw ContractViolation("train_unlimitd_i: config variant must be i");
  return train(config, data);
}

TrainResult train_unlimitd_r(const TrainConfig& config, const TrainingData& data) {
  if (config.variant != Variant::R) throw ContractViolation("train_unlimitd_r: config variant must be r");
  return train(config, data);
}

TrainResult train_unlimitd_f(const TrainConfig& config, const TrainingData& data) {
  if (config.variant != Variant::F) throw ContractViolation("train_unlimitd_f: config variant must be f");
  return train(config, data);
}

TrainResult train_mixture(const TrainConfig& config, const TrainingData& data) {
  if (config.alpha < 2) throw ContractViolation("train_mixture: alpha must be >= 2");
  if (config.variant == Variant::I) throw ContractViolation("train_mixture: variant must be r or f");
  return train(config, data);
}

}  // namespace unlimitd
