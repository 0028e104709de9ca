#pragma once

#include <string>

#include "run_config.hpp"

namespace unlimitd::cli {

/// Writes the finite dataset described by config.data as line-JSON.
void cmd_generate_data(const RunConfig& config, const std::string& out_path, bool force);

/// Trains UnLiMiTD or MAML per config.model. Next to `out_path` (say
/// model.json) it writes model.trace.csv, model.manifest.json, periodic
/// model.epoch<N>.json snapshots and, for variant F, model.phase1.json.
void cmd_train(const RunConfig& config, const std::string& out_path, const std::string& resume_path);

/// Evaluates one checkpoint, or one per projection seed when
/// config.eval.proj_seeds is set and `checkpoint` contains "{seed}".
/// Writes <out_base>.csv/.json/.manifest.json and the SVG plots.
void cmd_eval(const RunConfig& config, const std::string& checkpoint, const std::string& out_base);

/// Conditions on the context CSV and predicts at the query CSV inputs.
/// `out_path` "-" writes to stdout.
void cmd_predict(const std::string& checkpoint, const std::string& context_path, const std::string& query_path,
                 const std::string& out_path);

/// "dir/model.json" -> "dir/model"
std::string path_stem(const std::string& path);

}  // namespace unlimitd::cli
