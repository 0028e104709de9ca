#include "unlimitd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "unlimitd/errors.hpp"
#include "unlimitd/parallel.hpp"

namespace unlimitd {

double Predictor::context_nll(const Matrix&, const Vector&) const {
  throw ContractViolation(name() + " is a point predictor and has no likelihood");
}

UnlimitdPredictor::UnlimitdPredictor(MixtureModel model, std::string name)
    : model_(std::move(model)), name_(std::move(name)) {}

ModelPrediction UnlimitdPredictor::predict(const Matrix& context_x, const Vector& context_y,
                                           const Matrix& query_x) const {
  ModelPrediction out;
  out.has_covariance = true;
  if (context_x.cols() == 0) {
    const GaussianTaskPrior prior = model_.cluster_prior(0);
    const Matrix jac = jacobian(prior.theta0, query_x);
    out.predictive.mean = jac * prior.mu;
    out.predictive.cov = kernel_from_jacobians(jac, jac, prior.cov);
    out.cluster = 0;
    return out;
  }
  MixturePrediction p = unlimitd::predict(model_, context_x, context_y, query_x);
  out.predictive = std::move(p.predictive);
  out.cluster = p.cluster;
  return out;
}

double UnlimitdPredictor::context_nll(const Matrix& context_x, const Vector& context_y) const {
  return mixture_nll(model_, context_x, context_y);
}

MamlPredictor::MamlPredictor(ParamVector theta, MamlConfig config, std::string name)
    : theta_(std::move(theta)), config_(std::move(config)), name_(std::move(name)) {}

ModelPrediction MamlPredictor::predict(const Matrix& context_x, const Vector& context_y, const Matrix& query_x) const {
  ModelPrediction out;
  out.predictive.mean = context_x.cols() == 0 ? vectorize(forward(theta_, query_x))
                                              : maml_predict(theta_, context_x, context_y, query_x, config_);
  out.predictive.cov = Matrix::Zero(out.predictive.mean.size(), out.predictive.mean.size());
  return out;
}

EvalTask make_eval_task(const EvalTaskSource& source, int index, int k, int n_query) {
  if (source.kinds.empty()) throw ContractViolation("make_eval_task: no clusters");
  if (k < 0 || n_query < 0) throw ContractViolation("make_eval_task: negative size");
  const std::uint64_t task_seed = derive_seed(source.seed, 100, static_cast<std::uint64_t>(index));
  TaskStreams streams(task_seed);
  Rng query_rng(derive_seed(task_seed, 4));
  EvalTask t;
  t.cluster_label = static_cast<std::size_t>(index) % source.kinds.size();
  t.spec = sample_task(source.kinds[t.cluster_label], streams.task);
  if (k > 0) {
    t.context = sample_context(t.spec, k, streams.input, streams.noise, source.noise_std);
  } else {
    t.context.x.resize(1, 0);
    t.context.y.resize(0);
  }
  t.queries = sample_queries(t.spec, n_query, query_rng);
  return t;
}

MseSummary summarize(int k, std::vector<double> per_task) {
  if (per_task.empty()) throw ContractViolation("summarize: no values");
  MseSummary s;
  s.k = k;
  const double n = static_cast<double>(per_task.size());
  s.mean = std::accumulate(per_task.begin(), per_task.end(), 0.0) / n;
  if (per_task.size() > 1) {
    double ss = 0.0;
    for (double v : per_task) ss += (v - s.mean) * (v - s.mean);
    s.ci95 = 1.96 * std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
  }
  s.per_task = std::move(per_task);
  return s;
}

namespace {

void check_k_list(const std::vector<int>& k_list, int min_k) {
  if (k_list.empty()) throw ContractViolation("K list is empty");
  for (std::size_t i = 0; i < k_list.size(); ++i) {
    if (k_list[i] < min_k) throw ContractViolation("K values must be >= " + std::to_string(min_k));
    if (i > 0 && k_list[i] <= k_list[i - 1]) throw ContractViolation("K values must be strictly increasing");
  }
}

}  // namespace

std::vector<MseSummary> mse_eval(const Predictor& model, const EvalTaskSource& source, const std::vector<int>& k_list,
                                 int n_tasks, int n_query) {
  check_k_list(k_list, 0);
  if (n_tasks < 1 || n_query < 1) throw ContractViolation("mse_eval: n_tasks and n_query must be >= 1");
  std::vector<MseSummary> out;
  for (int k : k_list) {
    std::vector<double> per_task(static_cast<std::size_t>(n_tasks));
    parallel_for(per_task.size(), [&](std::size_t i) {
      const EvalTask t = make_eval_task(source, static_cast<int>(i), k, n_query);
      const ModelPrediction p = model.predict(t.context.x, t.context.y, t.queries.x);
      per_task[i] = (p.predictive.mean - t.queries.y).squaredNorm() / static_cast<double>(n_query);
    });
    out.push_back(summarize(k, std::move(per_task)));
  }
  return out;
}

double auc_mann_whitney(std::span<const double> in_scores, std::span<const double> ood_scores) {
  if (in_scores.empty() || ood_scores.empty()) throw ContractViolation("auc: both score sets must be nonempty");
  struct Item {
    double score;
    bool ood;
  };
  std::vector<Item> items;
  items.reserve(in_scores.size() + ood_scores.size());
  for (double s : in_scores) items.push_back({s, false});
  for (double s : ood_scores) items.push_back({s, true});
  for (const Item& it : items) {
    if (std::isnan(it.score)) throw ContractViolation("auc: NaN score");
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Sum of midranks (1-based) of the OoD scores.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (items[t].ood) rank_sum += midrank;
    }
    i = j;
  }
  const double n_ood = static_cast<double>(ood_scores.size());
  const double n_in = static_cast<double>(in_scores.size());
  const double u = rank_sum - n_ood * (n_ood + 1.0) / 2.0;
  return u / (n_ood * n_in);
}

double ood_auc(const Predictor& model, const EvalTaskSource& in_dist, const EvalTaskSource& ood, int k, int n_each) {
  if (k < 1 || n_each < 1) throw ContractViolation("ood_auc: K and n_each must be >= 1");
  const auto scores = [&](const EvalTaskSource& source) {
    std::vector<double> out(static_cast<std::size_t>(n_each));
    parallel_for(out.size(), [&](std::size_t i) {
      const EvalTask t = make_eval_task(source, static_cast<int>(i), k, 0);
      out[i] = model.context_nll(t.context.x, t.context.y);
    });
    return out;
  };
  const std::vector<double> in_scores = scores(in_dist);
  const std::vector<double> ood_scores = scores(ood);
  return auc_mann_whitney(in_scores, ood_scores);
}

std::vector<UncertaintyPoint> uncertainty_curve(const Predictor& model, const EvalTaskSource& source,
                                                const std::vector<int>& k_list, int n_tasks, int n_query) {
  if (!model.probabilistic()) {
    throw ContractViolation("uncertainty metric is unsupported for " + model.name() + " (no predictive covariance)");
  }
  check_k_list(k_list, 0);
  if (n_tasks < 1 || n_query < 1) throw ContractViolation("uncertainty_curve: n_tasks and n_query must be >= 1");
  std::vector<UncertaintyPoint> out;
  for (int k : k_list) {
    std::vector<double> per_task(static_cast<std::size_t>(n_tasks));
    parallel_for(per_task.size(), [&](std::size_t i) {
      const EvalTask t = make_eval_task(source, static_cast<int>(i), k, n_query);
      const ModelPrediction p = model.predict(t.context.x, t.context.y, t.queries.x);
      per_task[i] = p.predictive.stddev().mean();
    });
    const double mean = std::accumulate(per_task.begin(), per_task.end(), 0.0) / static_cast<double>(n_tasks);
    out.push_back({k, mean});
  }
  return out;
}

double cluster_accuracy(const UnlimitdPredictor& model, const EvalTaskSource& source, int k, int n_tasks) {
  if (k < 1 || n_tasks < 1) throw ContractViolation("cluster_accuracy: K and n_tasks must be >= 1");
  const std::size_t alpha = model.model().num_clusters();
  const std::size_t n_labels = source.kinds.size();
  // confusion[label][cluster]
  std::vector<std::size_t> inferred(static_cast<std::size_t>(n_tasks));
  std::vector<std::size_t> labels(static_cast<std::size_t>(n_tasks));
  parallel_for(inferred.size(), [&](std::size_t i) {
    const EvalTask t = make_eval_task(source, static_cast<int>(i), k, 0);
    labels[i] = t.cluster_label;
    inferred[i] = infer_cluster(model.model(), t.context.x, t.context.y);
  });
  std::vector<std::vector<std::size_t>> confusion(n_labels, std::vector<std::size_t>(alpha, 0));
  for (std::size_t i = 0; i < inferred.size(); ++i) ++confusion[labels[i]][inferred[i]];

  // Best injective assignment label -> cluster, by brute force over cluster
  // permutations (alpha is tiny).
  std::vector<std::size_t> perm(std::max(alpha, n_labels));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t label = 0; label < n_labels; ++label) {
      if (perm[label] < alpha) hits += confusion[label][perm[label]];
    }
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(n_tasks);
}

}  // namespace unlimitd
