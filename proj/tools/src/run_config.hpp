#pragma once

#include <cstdint>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "unlimitd/maml.hpp"
#include "unlimitd/tasks.hpp"
#include "unlimitd/trainer.hpp"

namespace unlimitd::cli {

/// Bad flags, flag combinations or config values. Exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EvalOptions {
  std::vector<int> k_list{1, 2, 3, 5, 10};
  int n_tasks = 200;
  int n_query = 100;
  int n_each = 200;
  bool mse = true;
  std::vector<TaskKind> ood;        // empty: no AUC rows
  bool uncertainty = false;
  std::vector<std::uint64_t> proj_seeds;  // empty: evaluate the one checkpoint given
  std::uint64_t seed = 0;
  std::vector<TaskKind> clusters;   // empty: the model's training clusters
  bool plots = true;
};

struct DataOptions {
  std::vector<TaskKind> clusters{TaskKind::Sine};
  int n_tasks = 10;
  int m_points = 50;
  std::uint64_t seed = 0;
};

/// Everything a command reads, from one JSON file plus flag overrides.
///
///   {"model": "unlimitd" | "maml", "train": {...}, "maml": {...},
///    "eval": {...}, "data": {...}, "dataset": "path", "checkpoint_every": 0,
///    "full_scale": false}
struct RunConfig {
  std::string model = "unlimitd";
  TrainConfig train;
  MamlConfig maml;
  EvalOptions eval;
  DataOptions data;
  std::string dataset;
  int checkpoint_every = 0;
  bool full_scale = false;
};

/// Unknown keys at any level are a UsageError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
nlohmann::json to_json(const RunConfig& c);

/// Paper-scale budgets: 60000 UnLiMiTD epochs, 70000 MAML epochs, 1000
/// evaluation tasks per K and per OoD source.
void apply_full_scale(RunConfig& c);

std::vector<int> parse_int_list(const std::string& s, const char* what);
std::vector<std::uint64_t> parse_seed_list(const std::string& s);

}  // namespace unlimitd::cli
