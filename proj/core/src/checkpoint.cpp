#include "unlimitd/checkpoint.hpp"

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "unlimitd/errors.hpp"

namespace unlimitd {

using nlohmann::json;

const char* to_string(ModelKind kind) { return kind == ModelKind::Maml ? "maml" : "unlimitd"; }

namespace {

json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vec_from(const json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json matrix_json(const Matrix& m) {
  std::vector<double> values;
  values.reserve(m.size());
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index k = 0; k < m.cols(); ++k) values.push_back(m(i, k));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"row_major", values}};
}

Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto values = j.at("row_major").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(values.size()) != rows * cols) throw FormatError("matrix payload size mismatch");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = values[static_cast<std::size_t>(i * cols + k)];
  return m;
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const char* what) {
  if (!j.is_object()) throw ContractViolation(std::string(what) + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!allowed.contains(key)) throw ContractViolation(std::string(what) + ": unknown key '" + key + "'");
  }
}

json kinds_json(const std::vector<TaskKind>& kinds) {
  json out = json::array();
  for (TaskKind k : kinds) out.push_back(to_string(k));
  return out;
}

std::vector<TaskKind> kinds_from(const json& j) {
  std::vector<TaskKind> out;
  if (j.is_string()) return task_kinds_from_list(j.get<std::string>());
  for (const auto& item : j) out.push_back(task_kind_from_string(item.get<std::string>()));
  return out;
}

json header(ModelKind kind) {
  return {{"format", kCheckpointFormat}, {"version", kCheckpointVersion}, {"model_kind", to_string(kind)}};
}

void check_header(const json& j, ModelKind expected) {
  if (j.value("format", std::string()) != kCheckpointFormat) throw FormatError("not an unlimitd checkpoint");
  const int version = j.value("version", -1);
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  if (j.value("model_kind", std::string()) != to_string(expected)) {
    throw FormatError(std::string("checkpoint holds a ") + j.value("model_kind", std::string("?")) +
                      " model, expected " + to_string(expected));
  }
}

json adam_json(const AdamState& a) { return {{"step", a.step}, {"m", vec_json(a.m)}, {"v", vec_json(a.v)}}; }

AdamState adam_from(const json& j) { return {vec_from(j.at("m")), vec_from(j.at("v")), j.at("step").get<std::int64_t>()}; }

}  // namespace

json to_json(const TrainConfig& c) {
  return {{"variant", to_string(c.variant)},
          {"alpha", c.alpha},
          {"epochs", c.epochs},
          {"tasks_per_epoch", c.tasks_per_epoch},
          {"context_size", c.context_size},
          {"subspace_size", c.subspace_size},
          {"learning_rate", c.learning_rate},
          {"sigma_eps", c.sigma_eps},
          {"seed", c.seed},
          {"layer_widths", c.layer_widths},
          {"activation", to_string(c.activation)},
          {"clusters", kinds_json(c.clusters)},
          {"fim_aux", {{"n_tasks", c.fim_aux.n_tasks}, {"m_points", c.fim_aux.m_points}, {"m_cap", c.fim_aux.m_cap}}}};
}

TrainConfig train_config_from_json(const json& j) {
  reject_unknown(j,
                 {"variant", "alpha", "epochs", "tasks_per_epoch", "context_size", "subspace_size", "learning_rate",
                  "sigma_eps", "seed", "layer_widths", "activation", "clusters", "fim_aux"},
                 "train config");
  TrainConfig c;
  if (j.contains("variant")) c.variant = variant_from_string(j["variant"].get<std::string>());
  c.alpha = j.value("alpha", c.alpha);
  c.epochs = j.value("epochs", c.epochs);
  c.tasks_per_epoch = j.value("tasks_per_epoch", c.tasks_per_epoch);
  c.context_size = j.value("context_size", c.context_size);
  c.subspace_size = j.value("subspace_size", c.subspace_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.sigma_eps = j.value("sigma_eps", c.sigma_eps);
  c.seed = j.value("seed", c.seed);
  if (j.contains("layer_widths")) c.layer_widths = j["layer_widths"].get<std::vector<int>>();
  if (j.contains("activation")) c.activation = activation_from_string(j["activation"].get<std::string>());
  if (j.contains("clusters")) c.clusters = kinds_from(j["clusters"]);
  if (j.contains("fim_aux")) {
    const json& f = j["fim_aux"];
    reject_unknown(f, {"n_tasks", "m_points", "m_cap"}, "fim_aux");
    c.fim_aux.n_tasks = f.value("n_tasks", c.fim_aux.n_tasks);
    c.fim_aux.m_points = f.value("m_points", c.fim_aux.m_points);
    c.fim_aux.m_cap = f.value("m_cap", c.fim_aux.m_cap);
  }
  return c;
}

json to_json(const MamlConfig& c) {
  return {{"inner_lr", c.inner_lr},
          {"inner_steps_train", c.inner_steps_train},
          {"inner_steps_test", c.inner_steps_test},
          {"meta_lr", c.meta_lr},
          {"epochs", c.epochs},
          {"tasks_per_epoch", c.tasks_per_epoch},
          {"context_size", c.context_size},
          {"query_size", c.query_size},
          {"seed", c.seed},
          {"layer_widths", c.layer_widths},
          {"activation", to_string(c.activation)},
          {"clusters", kinds_json(c.clusters)}};
}

MamlConfig maml_config_from_json(const json& j) {
  reject_unknown(j,
                 {"inner_lr", "inner_steps_train", "inner_steps_test", "meta_lr", "epochs", "tasks_per_epoch",
                  "context_size", "query_size", "seed", "layer_widths", "activation", "clusters"},
                 "maml config");
  MamlConfig c;
  c.inner_lr = j.value("inner_lr", c.inner_lr);
  c.inner_steps_train = j.value("inner_steps_train", c.inner_steps_train);
  c.inner_steps_test = j.value("inner_steps_test", c.inner_steps_test);
  c.meta_lr = j.value("meta_lr", c.meta_lr);
  c.epochs = j.value("epochs", c.epochs);
  c.tasks_per_epoch = j.value("tasks_per_epoch", c.tasks_per_epoch);
  c.context_size = j.value("context_size", c.context_size);
  c.query_size = j.value("query_size", c.query_size);
  c.seed = j.value("seed", c.seed);
  if (j.contains("layer_widths")) c.layer_widths = j["layer_widths"].get<std::vector<int>>();
  if (j.contains("activation")) c.activation = activation_from_string(j["activation"].get<std::string>());
  if (j.contains("clusters")) c.clusters = kinds_from(j["clusters"]);
  return c;
}

json to_json(const Checkpoint& c) {
  json j = header(ModelKind::Unlimitd);
  j["network"] = {{"layer_widths", c.config.layer_widths}, {"activation", to_string(c.config.activation)}};
  j["config"] = to_json(c.config);
  j["phase"] = c.phase == TrainPhase::Identity ? "identity" : "projected";
  j["epoch"] = c.epoch;
  j["sigma_eps"] = c.config.sigma_eps;
  j["theta0"] = vec_json(c.theta0);
  json clusters = json::array();
  for (std::size_t k = 0; k < c.mus.size(); ++k) {
    json cl = {{"mu", vec_json(c.mus[k])}};
    if (c.projection) cl["s_vec"] = vec_json(c.s_vecs.at(k));
    clusters.push_back(std::move(cl));
  }
  j["clusters"] = std::move(clusters);
  if (c.projection) {
    j["projection"] = matrix_json(*c.projection);
    j["projection"]["eigenvalues"] = vec_json(c.fim_eigenvalues);
  } else {
    j["projection"] = nullptr;
  }
  j["adam"] = adam_json(c.adam);
  j["rng"] = {{"task", c.rng_task}, {"input", c.rng_input}, {"noise", c.rng_noise}, {"finite", c.rng_finite}};
  j["consecutive_failures"] = c.consecutive_failures;
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  check_header(j, ModelKind::Unlimitd);
  try {
    Checkpoint c;
    c.config = train_config_from_json(j.at("config"));
    const std::string phase = j.at("phase").get<std::string>();
    if (phase == "identity") {
      c.phase = TrainPhase::Identity;
    } else if (phase == "projected") {
      c.phase = TrainPhase::Projected;
    } else {
      throw FormatError("unknown training phase '" + phase + "'");
    }
    c.epoch = j.at("epoch").get<int>();
    c.theta0 = vec_from(j.at("theta0"));
    if (!j.at("projection").is_null()) {
      const json& p = j["projection"];
      c.projection = std::make_shared<const Matrix>(matrix_from(p));
      c.fim_eigenvalues = vec_from(p.at("eigenvalues"));
    }
    for (const auto& cl : j.at("clusters")) {
      c.mus.push_back(vec_from(cl.at("mu")));
      if (c.projection) c.s_vecs.push_back(vec_from(cl.at("s_vec")));
    }
    c.adam = adam_from(j.at("adam"));
    const json& r = j.at("rng");
    c.rng_task = r.at("task").get<std::string>();
    c.rng_input = r.at("input").get<std::string>();
    c.rng_noise = r.at("noise").get<std::string>();
    c.rng_finite = r.at("finite").get<std::string>();
    c.consecutive_failures = j.value("consecutive_failures", 0);
    if (c.theta0.size() != c.config.network().param_count()) throw FormatError("theta0 length does not match network");
    return c;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint: ") + e.what());
  }
}

json to_json(const MamlState& s) {
  json j = header(ModelKind::Maml);
  j["network"] = {{"layer_widths", s.config.layer_widths}, {"activation", to_string(s.config.activation)}};
  j["config"] = to_json(s.config);
  j["epoch"] = s.epoch;
  j["theta"] = vec_json(s.theta);
  j["adam"] = adam_json(s.adam);
  j["rng"] = {{"task", s.rng_task}, {"input", s.rng_input}, {"noise", s.rng_noise}, {"finite", s.rng_finite}};
  return j;
}

MamlState maml_state_from_json(const json& j) {
  check_header(j, ModelKind::Maml);
  try {
    MamlState s;
    s.config = maml_config_from_json(j.at("config"));
    s.epoch = j.at("epoch").get<int>();
    s.theta = vec_from(j.at("theta"));
    s.adam = adam_from(j.at("adam"));
    const json& r = j.at("rng");
    s.rng_task = r.at("task").get<std::string>();
    s.rng_input = r.at("input").get<std::string>();
    s.rng_noise = r.at("noise").get<std::string>();
    s.rng_finite = r.at("finite").get<std::string>();
    if (s.theta.size() != s.config.network().param_count()) throw FormatError("theta length does not match network");
    return s;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed MAML checkpoint: ") + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out << text;
    if (!out) throw IoError("write failed for '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp + "' to '" + path + "': " + ec.message());
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

json parse_file(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path) {
  write_text_file(path, to_json(checkpoint).dump() + "\n");
}

Checkpoint load_checkpoint(const std::string& path) { return checkpoint_from_json(parse_file(path)); }

void save_maml_checkpoint(const MamlState& state, const std::string& path) {
  write_text_file(path, to_json(state).dump() + "\n");
}

MamlState load_maml_checkpoint(const std::string& path) { return maml_state_from_json(parse_file(path)); }

ModelKind peek_model_kind(const std::string& path) {
  const json j = parse_file(path);
  if (j.value("format", std::string()) != kCheckpointFormat) throw FormatError(path + ": not an unlimitd checkpoint");
  const std::string kind = j.value("model_kind", std::string());
  if (kind == "maml") return ModelKind::Maml;
  if (kind == "unlimitd") return ModelKind::Unlimitd;
  throw FormatError(path + ": unknown model kind '" + kind + "'");
}

}  // namespace unlimitd
