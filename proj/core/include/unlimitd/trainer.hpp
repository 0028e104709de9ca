#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "unlimitd/adam.hpp"
#include "unlimitd/mixture.hpp"
#include "unlimitd/network.hpp"
#include "unlimitd/tasks.hpp"

namespace unlimitd {

/// I: identity prior covariance. R: random projection. F: Fisher projection
/// computed after an identity-covariance first phase.
enum class Variant { I, R, F };

const char* to_string(Variant v);
Variant variant_from_string(const std::string& name);

/// Auxiliary dataset for the Fisher sketch when training tasks are unlimited:
/// n_tasks batches of min(P, m_cap) inputs unless m_points overrides it.
struct FimAuxConfig {
  int n_tasks = 100;
  int m_points = 0;  // 0 selects min(P, m_cap)
  int m_cap = 512;

  int resolved_points(Eigen::Index param_count) const;
};

struct TrainConfig {
  Variant variant = Variant::F;
  int alpha = 1;
  int epochs = 4000;
  int tasks_per_epoch = 24;
  int context_size = 10;
  int subspace_size = 10;
  double learning_rate = 1e-3;
  double sigma_eps = kContextNoiseStd;
  std::uint64_t seed = 0;
  std::vector<int> layer_widths{1, 40, 40, 1};
  Activation activation = Activation::ReLU;
  std::vector<TaskKind> clusters{TaskKind::Sine};
  FimAuxConfig fim_aux;

  NetworkSpec network() const { return {layer_widths, activation}; }
  /// Epoch at which variant F switches from phase 1 to phase 2.
  int phase_boundary() const { return variant == Variant::F ? epochs / 2 : 0; }
  /// Throws ContractViolation on an invalid combination (e.g. I with alpha > 1).
  void validate() const;
};

enum class TrainPhase {
  Identity,   // Sigma = I, single mu (variant I, or phase 1 of F)
  Projected,  // Sigma_j = Q^T diag(s_j^2) Q with Q frozen
};

/// Everything needed to resume training bit-exactly, plus the model itself.
struct Checkpoint {
  TrainConfig config;
  TrainPhase phase = TrainPhase::Identity;
  int epoch = 0;  // epochs completed
  Vector theta0;
  std::vector<Vector> mus;
  std::shared_ptr<const Matrix> projection;  // null in the identity phase
  Vector fim_eigenvalues;                   // empty unless variant F
  std::vector<Vector> s_vecs;
  AdamState adam;
  std::string rng_task, rng_input, rng_noise, rng_finite;
  int consecutive_failures = 0;

  MixtureModel model() const;
};

struct TraceEntry {
  int epoch;
  double nll;  // summed over the epoch's tasks
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<TraceEntry> trace;
  std::optional<Checkpoint> phase_boundary;  // variant F only, taken before Q exists
  int skipped_batches = 0;
};

struct TrainHooks {
  int checkpoint_every = 0;
  std::function<void(const Checkpoint&)> on_checkpoint;
  std::function<void(const TraceEntry&)> on_epoch;
};

/// Source of training tasks: unlimited sampling from clusters, or a frozen pool.
using TrainingData = std::variant<TaskSampler, FiniteDataset>;

/// Summed loss over a batch and its gradients. For alpha > 1 each task's loss
/// is the mixture NLL. Q is a constant.
struct LossAndGrad {
  double loss = 0.0;
  Vector grad_theta0;
  std::vector<Vector> grad_mu;
  std::vector<Vector> grad_s;
};

LossAndGrad loss_and_grad(const MixtureModel& model, const std::vector<SampledTask>& batch);

/// Fresh state at epoch 0 (He-initialized theta0, mu = 0). Variant R also
/// draws Q and s here.
Checkpoint initial_checkpoint(const TrainConfig& config);

/// Runs (or resumes) the epoch loop until config.epochs.
TrainResult train(const TrainConfig& config, const TrainingData& data, std::optional<Checkpoint> resume = std::nullopt,
                  const TrainHooks& hooks = {});

TrainResult train_unlimitd_i(const TrainConfig& config, const TrainingData& data);
TrainResult train_unlimitd_r(const TrainConfig& config, const TrainingData& data);
TrainResult train_unlimitd_f(const TrainConfig& config, const TrainingData& data);
/// alpha >= 2 mixture; `data` must provide tasks from every cluster.
TrainResult train_mixture(const TrainConfig& config, const TrainingData& data);

/// Input batches the Fisher sketch visits at the phase boundary: every task of
/// a finite dataset, otherwise the auxiliary inputs from config.fim_aux.
std::vector<Matrix> fisher_inputs(const TrainConfig& config, const TrainingData& data);

/// Seed of the Fisher sketch's random test matrices for this config.
std::uint64_t fisher_sketch_seed(const TrainConfig& config);

/// Orthonormal random projection: rows of an s x P standard normal matrix
/// orthonormalized.
Matrix random_projection(Eigen::Index param_count, int s, std::uint64_t seed);

}  // namespace unlimitd
