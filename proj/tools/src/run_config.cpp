#include "run_config.hpp"

#include <charconv>
#include <set>
#include <sstream>

#include "unlimitd/checkpoint.hpp"
#include "unlimitd/errors.hpp"

namespace unlimitd::cli {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw UsageError(where + " must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!allowed.contains(key)) throw UsageError("unknown config key '" + key + "' in " + where);
  }
}

std::vector<TaskKind> kinds_from(const json& j) {
  if (j.is_string()) return task_kinds_from_list(j.get<std::string>());
  std::vector<TaskKind> out;
  for (const auto& k : j) out.push_back(task_kind_from_string(k.get<std::string>()));
  return out;
}

json kinds_json(const std::vector<TaskKind>& kinds) {
  json out = json::array();
  for (TaskKind k : kinds) out.push_back(to_string(k));
  return out;
}

EvalOptions eval_from(const json& j) {
  reject_unknown(j,
                 {"k_list", "n_tasks", "n_query", "n_each", "mse", "ood", "uncertainty", "proj_seeds", "seed",
                  "clusters", "plots"},
                 "eval");
  EvalOptions e;
  if (j.contains("k_list")) e.k_list = j.at("k_list").get<std::vector<int>>();
  if (j.contains("n_tasks")) e.n_tasks = j.at("n_tasks").get<int>();
  if (j.contains("n_query")) e.n_query = j.at("n_query").get<int>();
  if (j.contains("n_each")) e.n_each = j.at("n_each").get<int>();
  if (j.contains("mse")) e.mse = j.at("mse").get<bool>();
  if (j.contains("ood")) e.ood = kinds_from(j.at("ood"));
  if (j.contains("uncertainty")) e.uncertainty = j.at("uncertainty").get<bool>();
  if (j.contains("proj_seeds")) e.proj_seeds = j.at("proj_seeds").get<std::vector<std::uint64_t>>();
  if (j.contains("seed")) e.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("clusters")) e.clusters = kinds_from(j.at("clusters"));
  if (j.contains("plots")) e.plots = j.at("plots").get<bool>();
  return e;
}

DataOptions data_from(const json& j) {
  reject_unknown(j, {"clusters", "n_tasks", "m_points", "seed"}, "data");
  DataOptions d;
  if (j.contains("clusters")) d.clusters = kinds_from(j.at("clusters"));
  if (j.contains("n_tasks")) d.n_tasks = j.at("n_tasks").get<int>();
  if (j.contains("m_points")) d.m_points = j.at("m_points").get<int>();
  if (j.contains("seed")) d.seed = j.at("seed").get<std::uint64_t>();
  return d;
}

}  // namespace

RunConfig run_config_from_json(const json& j) {
  reject_unknown(j, {"model", "train", "maml", "eval", "data", "dataset", "checkpoint_every", "full_scale"},
                 "config");
  RunConfig c;
  try {
    if (j.contains("model")) c.model = j.at("model").get<std::string>();
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"));
    if (j.contains("maml")) c.maml = maml_config_from_json(j.at("maml"));
    if (j.contains("eval")) c.eval = eval_from(j.at("eval"));
    if (j.contains("data")) c.data = data_from(j.at("data"));
    if (j.contains("dataset")) c.dataset = j.at("dataset").get<std::string>();
    if (j.contains("checkpoint_every")) c.checkpoint_every = j.at("checkpoint_every").get<int>();
    if (j.contains("full_scale")) c.full_scale = j.at("full_scale").get<bool>();
  } catch (const ContractViolation& e) {
    throw UsageError(e.what());
  } catch (const json::exception& e) {
    throw UsageError(std::string("bad config value: ") + e.what());
  }
  if (c.model != "unlimitd" && c.model != "maml") {
    throw UsageError("config 'model' must be \"unlimitd\" or \"maml\", got \"" + c.model + "\"");
  }
  if (c.full_scale) apply_full_scale(c);
  return c;
}

RunConfig load_run_config(const std::string& path) {
  const std::string text = read_text_file(path);
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(path + ": " + e.what());
  }
  try {
    return run_config_from_json(j);
  } catch (const UsageError& e) {
    throw UsageError(path + ": " + e.what());
  }
}

json to_json(const RunConfig& c) {
  return {{"model", c.model},
          {"train", to_json(c.train)},
          {"maml", to_json(c.maml)},
          {"eval",
           {{"k_list", c.eval.k_list},
            {"n_tasks", c.eval.n_tasks},
            {"n_query", c.eval.n_query},
            {"n_each", c.eval.n_each},
            {"mse", c.eval.mse},
            {"ood", kinds_json(c.eval.ood)},
            {"uncertainty", c.eval.uncertainty},
            {"proj_seeds", c.eval.proj_seeds},
            {"seed", c.eval.seed},
            {"clusters", kinds_json(c.eval.clusters)},
            {"plots", c.eval.plots}}},
          {"data",
           {{"clusters", kinds_json(c.data.clusters)},
            {"n_tasks", c.data.n_tasks},
            {"m_points", c.data.m_points},
            {"seed", c.data.seed}}},
          {"dataset", c.dataset},
          {"checkpoint_every", c.checkpoint_every},
          {"full_scale", c.full_scale}};
}

void apply_full_scale(RunConfig& c) {
  c.full_scale = true;
  c.train.epochs = 60000;
  c.maml.epochs = 70000;
  c.eval.n_tasks = 1000;
  c.eval.n_each = 1000;
}

std::vector<int> parse_int_list(const std::string& s, const char* what) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    int v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || ptr != item.data() + item.size()) {
      throw UsageError(std::string("bad ") + what + " entry '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw UsageError(std::string(what) + " is empty");
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (int v : parse_int_list(s, "seed list")) {
    if (v < 0) throw UsageError("seeds must be non-negative");
    out.push_back(static_cast<std::uint64_t>(v));
  }
  return out;
}

}  // namespace unlimitd::cli
