#include "unlimitd/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <numeric>
#include <sstream>

#include "unlimitd/errors.hpp"

namespace unlimitd {

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::Sine:
      return "sine";
    case TaskKind::Line:
      return "line";
    case TaskKind::Quadratic:
      return "quadratic";
  }
  return "unknown";
}

TaskKind task_kind_from_string(const std::string& name) {
  if (name == "sine" || name == "sines") return TaskKind::Sine;
  if (name == "line" || name == "lines") return TaskKind::Line;
  if (name == "quadratic" || name == "quadratics") return TaskKind::Quadratic;
  throw ContractViolation("unknown task cluster '" + name + "' (expected sine, line or quadratic)");
}

std::vector<TaskKind> task_kinds_from_list(const std::string& comma_separated) {
  std::vector<TaskKind> kinds;
  std::stringstream ss(comma_separated);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) kinds.push_back(task_kind_from_string(item));
  }
  if (kinds.empty()) throw ContractViolation("empty task cluster list");
  return kinds;
}

TaskSpec sample_task(TaskKind kind, Rng& rng) {
  TaskSpec t;
  t.kind = kind;
  switch (kind) {
    case TaskKind::Sine:
      t.a = rng.uniform(0.1, 5.0);
      t.phi = rng.uniform(0.0, std::numbers::pi);
      break;
    case TaskKind::Line:
      t.a = rng.uniform(-1.0, 1.0);
      break;
    case TaskKind::Quadratic:
      t.a = rng.uniform(-0.2, 0.2);
      t.phi = rng.uniform(-2.0, 2.0);
      break;
  }
  return t;
}

double eval_task(const TaskSpec& task, double x) {
  switch (task.kind) {
    case TaskKind::Sine:
      return task.a * std::sin(x + task.phi) + 1.0;
    case TaskKind::Line:
      return task.a * x;
    case TaskKind::Quadratic:
      return task.a * (x - task.phi) * (x - task.phi) + 0.5;
  }
  return 0.0;
}

Vector eval_task(const TaskSpec& task, const Matrix& inputs) {
  if (inputs.rows() != 1) throw ContractViolation("eval_task: tasks are scalar-input");
  Vector y(inputs.cols());
  for (Eigen::Index t = 0; t < inputs.cols(); ++t) y[t] = eval_task(task, inputs(0, t));
  return y;
}

ContextBatch sample_context(const TaskSpec& task, int k, Rng& input_rng, Rng& noise_rng, double noise_std) {
  if (k < 1) throw ContractViolation("sample_context: K must be >= 1");
  ContextBatch b;
  b.x = input_rng.uniform_matrix(1, k, kInputLow, kInputHigh);
  b.y = eval_task(task, b.x);
  if (noise_std > 0.0) b.y += noise_rng.normal_vector(k, noise_std);
  return b;
}

ContextBatch sample_queries(const TaskSpec& task, int n, Rng& input_rng) {
  ContextBatch b;
  b.x = input_rng.uniform_matrix(1, n, kInputLow, kInputHigh);
  b.y = eval_task(task, b.x);
  return b;
}

TaskSampler::TaskSampler(std::vector<TaskKind> kinds, double noise_std)
    : kinds_(std::move(kinds)), noise_std_(noise_std) {
  if (kinds_.empty()) throw ContractViolation("TaskSampler: no clusters");
}

std::vector<SampledTask> TaskSampler::sample(int n, int k, TaskStreams& streams) const {
  std::vector<SampledTask> out;
  out.reserve(n);
  const int alpha = static_cast<int>(kinds_.size());
  for (int c = 0; c < alpha; ++c) {
    const int count = n / alpha + (c == 0 ? n % alpha : 0);
    for (int i = 0; i < count; ++i) {
      SampledTask t;
      t.spec = sample_task(kinds_[c], streams.task);
      t.context = sample_context(t.spec, k, streams.input, streams.noise, noise_std_);
      out.push_back(std::move(t));
    }
  }
  return out;
}

FiniteDataset::FiniteDataset(std::vector<FiniteTask> tasks, std::uint64_t seed) : tasks_(std::move(tasks)), seed_(seed) {
  if (tasks_.empty()) throw ContractViolation("FiniteDataset: no tasks");
  const Eigen::Index m = tasks_.front().x.cols();
  for (const auto& t : tasks_) {
    if (t.x.rows() != 1 || t.x.cols() != m || t.y.size() != m) {
      throw ContractViolation("FiniteDataset: every task needs the same number of scalar points");
    }
  }
}

FiniteDataset FiniteDataset::generate(const std::vector<TaskKind>& kinds, int n_tasks, int m_points,
                                      std::uint64_t seed, double noise_std) {
  if (n_tasks < 1 || m_points < 1) throw ContractViolation("FiniteDataset: N and M must be >= 1");
  TaskStreams streams(seed);
  const TaskSampler sampler(kinds, noise_std);
  std::vector<FiniteTask> tasks;
  for (auto& s : sampler.sample(n_tasks, m_points, streams)) {
    tasks.push_back({s.spec, std::move(s.context.x), std::move(s.context.y)});
  }
  return {std::move(tasks), seed};
}

int FiniteDataset::points_per_task() const { return static_cast<int>(tasks_.front().x.cols()); }

std::vector<SampledTask> FiniteDataset::sample(int n, int k, Rng& rng) const {
  const int m = points_per_task();
  if (k < 1 || k > m) throw ContractViolation("FiniteDataset::sample: K must lie in [1, M]");
  std::vector<std::size_t> order(tasks_.size());
  std::vector<std::size_t> chosen;
  chosen.reserve(n);
  while (static_cast<int>(chosen.size()) < n) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t idx : order) {
      if (static_cast<int>(chosen.size()) == n) break;
      chosen.push_back(idx);
    }
  }
  std::vector<int> points(m);
  std::vector<SampledTask> out;
  out.reserve(n);
  for (std::size_t idx : chosen) {
    const FiniteTask& src = tasks_[idx];
    std::iota(points.begin(), points.end(), 0);
    // Partial Fisher-Yates: the first K entries are a uniform K-subset.
    for (int i = 0; i < k; ++i) {
      const std::size_t j = i + rng.index(m - i);
      std::swap(points[i], points[j]);
    }
    SampledTask t;
    t.spec = src.spec;
    t.context.x.resize(1, k);
    t.context.y.resize(k);
    for (int i = 0; i < k; ++i) {
      t.context.x(0, i) = src.x(0, points[i]);
      t.context.y[i] = src.y[points[i]];
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<Matrix> FiniteDataset::all_inputs() const {
  std::vector<Matrix> out;
  out.reserve(tasks_.size());
  for (const auto& t : tasks_) out.push_back(t.x);
  return out;
}

namespace {

nlohmann::json params_json(const TaskSpec& t) {
  switch (t.kind) {
    case TaskKind::Sine:
      return {{"A", t.a}, {"phi", t.phi}};
    case TaskKind::Line:
      return {{"a", t.a}};
    case TaskKind::Quadratic:
      return {{"a", t.a}, {"phi", t.phi}};
  }
  return {};
}

}  // namespace

void FiniteDataset::write_jsonl(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    const FiniteTask& t = tasks_[i];
    nlohmann::json line;
    line["task"] = i;
    line["kind"] = to_string(t.spec.kind);
    line["params"] = params_json(t.spec);
    line["seed"] = seed_;
    line["x"] = std::vector<double>(t.x.data(), t.x.data() + t.x.size());
    line["y"] = std::vector<double>(t.y.data(), t.y.data() + t.y.size());
    out << line.dump() << '\n';
  }
  if (!out) throw IoError("write failed for '" + path + "'");
}

FiniteDataset FiniteDataset::read_jsonl(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset '" + path + "'");
  std::vector<FiniteTask> tasks;
  std::uint64_t seed = 0;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      FiniteTask t;
      t.spec.kind = task_kind_from_string(j.at("kind").get<std::string>());
      const auto& p = j.at("params");
      if (t.spec.kind == TaskKind::Sine) {
        t.spec.a = p.at("A").get<double>();
        t.spec.phi = p.at("phi").get<double>();
      } else {
        t.spec.a = p.at("a").get<double>();
        if (t.spec.kind == TaskKind::Quadratic) t.spec.phi = p.at("phi").get<double>();
      }
      const auto xs = j.at("x").get<std::vector<double>>();
      const auto ys = j.at("y").get<std::vector<double>>();
      if (xs.size() != ys.size()) throw FormatError("x and y lengths differ");
      t.x = Eigen::Map<const Matrix>(xs.data(), 1, static_cast<Eigen::Index>(xs.size()));
      t.y = Eigen::Map<const Vector>(ys.data(), static_cast<Eigen::Index>(ys.size()));
      seed = j.value("seed", std::uint64_t{0});
      tasks.push_back(std::move(t));
    } catch (const std::exception& e) {
      throw FormatError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return {std::move(tasks), seed};
}

std::vector<Matrix> auxiliary_fim_inputs(int n_tasks, int m_points, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Matrix> out;
  out.reserve(n_tasks);
  for (int i = 0; i < n_tasks; ++i) out.push_back(rng.uniform_matrix(1, m_points, kInputLow, kInputHigh));
  return out;
}

}  // namespace unlimitd
