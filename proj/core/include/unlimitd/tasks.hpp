#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "unlimitd/linalg.hpp"
#include "unlimitd/rng.hpp"

namespace unlimitd {

enum class TaskKind { Sine, Line, Quadratic };

const char* to_string(TaskKind kind);
/// Accepts "sine", "line", "quadratic" and their plurals.
TaskKind task_kind_from_string(const std::string& name);
std::vector<TaskKind> task_kinds_from_list(const std::string& comma_separated);

inline constexpr double kInputLow = -5.0;
inline constexpr double kInputHigh = 5.0;
inline constexpr double kContextNoiseStd = 0.05;

/// One sampled function.
///   Sine:      A sin(x + phi) + 1,  A in [0.1, 5], phi in [0, pi]
///   Line:      a x,                 a in [-1, 1]   (phi unused)
///   Quadratic: a (x - phi)^2 + 0.5, a in [-0.2, 0.2], phi in [-2, 2]
struct TaskSpec {
  TaskKind kind = TaskKind::Sine;
  double a = 0.0;
  double phi = 0.0;

  bool operator==(const TaskSpec&) const = default;
};

TaskSpec sample_task(TaskKind kind, Rng& rng);

double eval_task(const TaskSpec& task, double x);
/// Noiseless outputs at the columns of a 1 x K input matrix.
Vector eval_task(const TaskSpec& task, const Matrix& inputs);

/// K labeled points of one task: inputs 1 x K, outputs length K.
struct ContextBatch {
  Matrix x;
  Vector y;
};

/// K inputs uniform on [-5, 5] with i.i.d. N(0, noise_std^2) noise on the outputs.
ContextBatch sample_context(const TaskSpec& task, int k, Rng& input_rng, Rng& noise_rng,
                            double noise_std = kContextNoiseStd);

/// Noiseless query batch of `n` uniform inputs.
ContextBatch sample_queries(const TaskSpec& task, int n, Rng& input_rng);

struct SampledTask {
  TaskSpec spec;
  ContextBatch context;
};

/// Infinite-mode sampler over a list of clusters. Tasks are split evenly
/// across clusters in list order (n / alpha each, remainder to the first).
class TaskSampler {
 public:
  explicit TaskSampler(std::vector<TaskKind> kinds, double noise_std = kContextNoiseStd);

  const std::vector<TaskKind>& kinds() const { return kinds_; }
  std::vector<SampledTask> sample(int n, int k, TaskStreams& streams) const;

 private:
  std::vector<TaskKind> kinds_;
  double noise_std_;
};

struct FiniteTask {
  TaskSpec spec;
  Matrix x;  // 1 x M
  Vector y;  // noisy, frozen at construction
};

/// Finite pool of N tasks with M noisy points each, fixed by (kinds, N, M, seed).
class FiniteDataset {
 public:
  FiniteDataset(std::vector<FiniteTask> tasks, std::uint64_t seed);

  static FiniteDataset generate(const std::vector<TaskKind>& kinds, int n_tasks, int m_points, std::uint64_t seed,
                                double noise_std = kContextNoiseStd);

  const std::vector<FiniteTask>& tasks() const { return tasks_; }
  std::size_t size() const { return tasks_.size(); }
  int points_per_task() const;
  std::uint64_t seed() const { return seed_; }

  /// n tasks (without replacement when n <= N) each with a uniformly random
  /// K-subset of its frozen points.
  std::vector<SampledTask> sample(int n, int k, Rng& rng) const;

  /// Inputs of every task, e.g. for the Fisher sketch.
  std::vector<Matrix> all_inputs() const;

  void write_jsonl(const std::string& path) const;
  static FiniteDataset read_jsonl(const std::string& path);

 private:
  std::vector<FiniteTask> tasks_;
  std::uint64_t seed_;
};

/// N tasks' worth of M inputs uniform on [-5, 5], for sketching the Fisher
/// matrix when training tasks are unlimited. Only inputs matter there.
std::vector<Matrix> auxiliary_fim_inputs(int n_tasks, int m_points, std::uint64_t seed);

}  // namespace unlimitd
