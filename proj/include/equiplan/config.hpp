#pragma once

#include <string>

#include <json.hpp>

#include "equiplan/eval.hpp"
#include "equiplan/model.hpp"
#include "equiplan/scene.hpp"
#include "equiplan/training.hpp"

namespace equiplan {

struct DataConfig {
    GeneratorConfig generator;  // t_p/t_f/dt are taken from the model section
    std::uint64_t seed = 7;
};

// Complete run description; JSON keys mirror the field names below.
struct RunConfig {
    ModelConfig model;
    DataConfig data;
    TrainConfig train;
    EvalConfig eval;
    ScoreMode score_mode = ScoreMode::coordinate_mean;

    void validate() const;
};

nlohmann::ordered_json to_json(const ModelConfig& cfg);
nlohmann::ordered_json to_json(const TrainConfig& cfg);
nlohmann::ordered_json to_json(const DataConfig& cfg);
nlohmann::ordered_json to_json(const EvalConfig& cfg);
nlohmann::ordered_json to_json(const RunConfig& cfg);

// Strict parsers: unknown keys are rejected with their full path.
ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& ctx = "model");
TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& ctx = "train");
DataConfig data_config_from_json(const nlohmann::json& j, const std::string& ctx = "data");
EvalConfig eval_config_from_json(const nlohmann::json& j, const std::string& ctx = "eval");
RunConfig run_config_from_json(const nlohmann::json& j);

const char* to_string(ScoreMode mode);
ScoreMode score_mode_from_string(const std::string& name);

// Canonical serialized form; load(dump(cfg)) == cfg and dump is stable.
std::string dump_run_config(const RunConfig& cfg);
RunConfig load_run_config_file(const std::string& path);

// Applies EQUIPLAN_* environment overrides onto a config JSON tree. Key path
// segments are separated by double underscores: EQUIPLAN_TRAIN__BATCH_SIZE=64.
void apply_env_overrides(nlohmann::ordered_json& j, const char* prefix = "EQUIPLAN_");

}  // namespace equiplan
