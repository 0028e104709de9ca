#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "unlimitd/adam.hpp"
#include "unlimitd/network.hpp"
#include "unlimitd/tasks.hpp"
#include "unlimitd/trainer.hpp"

namespace unlimitd {

/// First-order MAML baseline settings.
struct MamlConfig {
  double inner_lr = 1e-3;
  int inner_steps_train = 5;
  int inner_steps_test = 10;
  double meta_lr = 1e-3;
  int epochs = 4000;
  int tasks_per_epoch = 24;
  int context_size = 10;
  int query_size = 10;
  std::uint64_t seed = 0;
  std::vector<int> layer_widths{1, 40, 40, 1};
  Activation activation = Activation::ReLU;
  std::vector<TaskKind> clusters{TaskKind::Sine};

  NetworkSpec network() const { return {layer_widths, activation}; }
  void validate() const;
};

/// Mean squared error of forward(theta, X) against vectorized targets.
double mse(const ParamVector& theta, const Matrix& inputs, const Vector& y);
Vector mse_gradient(const ParamVector& theta, const Matrix& inputs, const Vector& y);

/// `steps` plain gradient-descent steps on the context MSE.
ParamVector inner_adapt(const ParamVector& theta, const Matrix& context_inputs, const Vector& context_y, int steps,
                        double inner_lr);

struct MamlState {
  MamlConfig config;
  int epoch = 0;
  Vector theta;
  AdamState adam;
  std::string rng_task, rng_input, rng_noise, rng_finite;

  ParamVector params() const { return {config.network(), theta}; }
};

struct MamlResult {
  MamlState state;
  std::vector<TraceEntry> trace;  // mean post-adaptation query MSE per epoch
};

MamlState initial_maml_state(const MamlConfig& config);

/// First-order meta-training: the meta-gradient is the query-MSE gradient at
/// the adapted parameters, averaged over the epoch's tasks.
MamlResult meta_train(const MamlConfig& config, const TrainingData& data,
                      std::optional<MamlState> resume = std::nullopt);

/// Adapts with inner_steps_test steps then evaluates at the queries. Point
/// predictions only.
Vector maml_predict(const ParamVector& theta, const Matrix& context_inputs, const Vector& context_y,
                    const Matrix& query_inputs, const MamlConfig& config);

}  // namespace unlimitd
