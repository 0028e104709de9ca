#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "unlimitd/gp.hpp"
#include "unlimitd/maml.hpp"
#include "unlimitd/mixture.hpp"
#include "unlimitd/tasks.hpp"

namespace unlimitd {

/// Prediction at query inputs. Point predictors (MAML) leave has_covariance
/// false and predictive.cov as a zero matrix.
struct ModelPrediction {
  PredictiveGaussian predictive;
  bool has_covariance = false;
  std::optional<std::size_t> cluster;
};

/// What the evaluation harness needs from a meta-learned model.
class Predictor {
 public:
  virtual ~Predictor() = default;

  virtual std::string name() const = 0;
  virtual bool probabilistic() const = 0;
  /// An empty context returns the prior (cluster 0 for mixtures).
  virtual ModelPrediction predict(const Matrix& context_x, const Vector& context_y, const Matrix& query_x) const = 0;
  /// Context NLL used as the OoD score. Throws ContractViolation for point predictors.
  virtual double context_nll(const Matrix& context_x, const Vector& context_y) const;
};

class UnlimitdPredictor : public Predictor {
 public:
  explicit UnlimitdPredictor(MixtureModel model, std::string name = "unlimitd");

  std::string name() const override { return name_; }
  bool probabilistic() const override { return true; }
  ModelPrediction predict(const Matrix& context_x, const Vector& context_y, const Matrix& query_x) const override;
  double context_nll(const Matrix& context_x, const Vector& context_y) const override;

  const MixtureModel& model() const { return model_; }

 private:
  MixtureModel model_;
  std::string name_;
};

class MamlPredictor : public Predictor {
 public:
  MamlPredictor(ParamVector theta, MamlConfig config, std::string name = "maml");

  std::string name() const override { return name_; }
  bool probabilistic() const override { return false; }
  ModelPrediction predict(const Matrix& context_x, const Vector& context_y, const Matrix& query_x) const override;

 private:
  ParamVector theta_;
  MamlConfig config_;
  std::string name_;
};

/// Held-out evaluation tasks. Task i is drawn from cluster kinds[i % alpha]
/// with its own seeded streams, so any task can be rebuilt independently of
/// the others. Contexts are nested in K: the K=1 context is the first point
/// of the K=10 one.
struct EvalTaskSource {
  std::vector<TaskKind> kinds{TaskKind::Sine};
  std::uint64_t seed = 0;
  double noise_std = kContextNoiseStd;
};

struct EvalTask {
  TaskSpec spec;
  std::size_t cluster_label = 0;  // index into EvalTaskSource::kinds
  ContextBatch context;           // K noisy points
  ContextBatch queries;           // noiseless
};

EvalTask make_eval_task(const EvalTaskSource& source, int index, int k, int n_query);

struct MseSummary {
  int k = 0;
  double mean = 0.0;
  double ci95 = 0.0;
  std::vector<double> per_task;
};

/// Mean and 1.96 * sample-std / sqrt(n) of a list of per-task values; n = 1
/// gives ci95 = 0.
MseSummary summarize(int k, std::vector<double> per_task);

std::vector<MseSummary> mse_eval(const Predictor& model, const EvalTaskSource& source, const std::vector<int>& k_list,
                                 int n_tasks, int n_query);

/// Mann-Whitney estimate of P(ood > in) + 0.5 P(ood == in), with midranks.
double auc_mann_whitney(std::span<const double> in_scores, std::span<const double> ood_scores);

/// Context NLLs of n_each tasks from each source, scored by AUC with the OoD
/// tasks as positives.
double ood_auc(const Predictor& model, const EvalTaskSource& in_dist, const EvalTaskSource& ood, int k, int n_each);

struct UncertaintyPoint {
  int k = 0;
  double mean_std = 0.0;
};

/// Mean posterior standard deviation over tasks and queries for each K
/// (K = 0 is the prior). Rejects point predictors.
std::vector<UncertaintyPoint> uncertainty_curve(const Predictor& model, const EvalTaskSource& source,
                                                const std::vector<int>& k_list, int n_tasks, int n_query);

/// Fraction of tasks whose inferred cluster matches the label, maximized over
/// relabelings of the learnt clusters (their order is arbitrary).
double cluster_accuracy(const UnlimitdPredictor& model, const EvalTaskSource& source, int k, int n_tasks);

}  // namespace unlimitd
