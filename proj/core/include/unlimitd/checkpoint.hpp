#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "unlimitd/maml.hpp"
#include "unlimitd/trainer.hpp"

namespace unlimitd {

/// Checkpoints are versioned JSON documents. Doubles are written in shortest
/// round-trip form, so save/load is bit-exact.
inline constexpr int kCheckpointVersion = 1;
inline constexpr const char* kCheckpointFormat = "unlimitd-checkpoint";

enum class ModelKind { Unlimitd, Maml };

const char* to_string(ModelKind kind);

nlohmann::json to_json(const TrainConfig& config);
/// Missing keys keep their defaults; unknown keys are rejected.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MamlConfig& config);
MamlConfig maml_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_json(const nlohmann::json& j);
nlohmann::json to_json(const MamlState& state);
MamlState maml_state_from_json(const nlohmann::json& j);

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
void save_maml_checkpoint(const MamlState& state, const std::string& path);
MamlState load_maml_checkpoint(const std::string& path);

/// Reads only the header to tell UnLiMiTD and MAML checkpoints apart.
ModelKind peek_model_kind(const std::string& path);

/// Writes `text` to `path` atomically enough for our purposes (temp + rename).
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace unlimitd
