#include "equiplan/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>

extern char** environ;

namespace equiplan {

namespace {

// Reads known keys and rejects everything else with its full path.
class FieldReader {
  public:
    FieldReader(const nlohmann::json& j, std::string ctx) : j_(j), ctx_(std::move(ctx)) {
        if (!j_.is_object()) {
            throw validation_error("config section '" + ctx_ + "' must be an object");
        }
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_[key].get<T>();
        } catch (const nlohmann::json::exception&) {
            throw validation_error("config key '" + ctx_ + "." + key + "' has the wrong type");
        }
    }

    bool has(const char* key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    const nlohmann::json& sub(const char* key) { return j_[key]; }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) {
                throw validation_error("unknown config key '" + ctx_ + "." + key + "'");
            }
        }
    }

  private:
    const nlohmann::json& j_;
    std::string ctx_;
    std::set<std::string> seen_;
};

}  // namespace

const char* to_string(ScoreMode mode) {
    return mode == ScoreMode::coordinate_mean ? "paper" : "invariant";
}

ScoreMode score_mode_from_string(const std::string& name) {
    if (name == "paper") return ScoreMode::coordinate_mean;
    if (name == "invariant") return ScoreMode::invariant;
    throw validation_error("score_mode must be 'paper' or 'invariant', got '" + name + "'");
}

nlohmann::ordered_json to_json(const ModelConfig& cfg) {
    nlohmann::ordered_json j;
    j["C"] = cfg.channels;
    j["D"] = cfg.hidden;
    j["Q"] = cfg.relations;
    j["K"] = cfg.modes;
    j["N"] = cfg.blocks;
    j["T_p"] = cfg.t_p;
    j["T_f"] = cfg.t_f;
    return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j, const std::string& ctx) {
    ModelConfig cfg;
    FieldReader r(j, ctx);
    r.get("C", cfg.channels);
    r.get("D", cfg.hidden);
    r.get("Q", cfg.relations);
    r.get("K", cfg.modes);
    r.get("N", cfg.blocks);
    r.get("T_p", cfg.t_p);
    r.get("T_f", cfg.t_f);
    r.finish();
    return cfg;
}

nlohmann::ordered_json to_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["epochs"] = cfg.epochs;
    j["batch_size"] = cfg.batch_size;
    j["lr0"] = cfg.lr0;
    j["lr_decay"] = cfg.lr_decay;
    j["lr_decay_every"] = cfg.lr_decay_every;
    j["alpha"] = cfg.alpha;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["plan_loss_mode"] = cfg.plan_loss_mode == PlanLossMode::selected ? "selected" : "closest";
    nlohmann::ordered_json a;
    a["prediction_loss"] = cfg.ablation.prediction_loss;
    a["route_attraction"] = cfg.ablation.route_attraction;
    a["equivariant_init"] = cfg.ablation.equivariant_init;
    j["ablation"] = std::move(a);
    return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& ctx) {
    TrainConfig cfg;
    FieldReader r(j, ctx);
    r.get("epochs", cfg.epochs);
    r.get("batch_size", cfg.batch_size);
    r.get("lr0", cfg.lr0);
    r.get("lr_decay", cfg.lr_decay);
    r.get("lr_decay_every", cfg.lr_decay_every);
    r.get("alpha", cfg.alpha);
    r.get("seed", cfg.seed);
    r.get("threads", cfg.threads);
    std::string plan_mode = cfg.plan_loss_mode == PlanLossMode::selected ? "selected" : "closest";
    r.get("plan_loss_mode", plan_mode);
    if (plan_mode == "selected") {
        cfg.plan_loss_mode = PlanLossMode::selected;
    } else if (plan_mode == "closest") {
        cfg.plan_loss_mode = PlanLossMode::closest;
    } else {
        throw validation_error("config key '" + ctx +
                               ".plan_loss_mode' must be 'selected' or 'closest'");
    }
    if (r.has("ablation")) {
        FieldReader ra(r.sub("ablation"), ctx + ".ablation");
        ra.get("prediction_loss", cfg.ablation.prediction_loss);
        ra.get("route_attraction", cfg.ablation.route_attraction);
        ra.get("equivariant_init", cfg.ablation.equivariant_init);
        ra.finish();
    }
    r.finish();
    return cfg;
}

nlohmann::ordered_json to_json(const DataConfig& cfg) {
    nlohmann::ordered_json j;
    j["scenes"] = cfg.generator.scenes;
    j["seed"] = cfg.seed;
    j["dt"] = cfg.generator.dt;
    j["m_min"] = cfg.generator.m_min;
    j["m_max"] = cfg.generator.m_max;
    j["speed_min"] = cfg.generator.speed_min;
    j["speed_max"] = cfg.generator.speed_max;
    j["radius_min"] = cfg.generator.radius_min;
    j["radius_max"] = cfg.generator.radius_max;
    j["noise_sigma"] = cfg.generator.noise_sigma;
    j["world_extent"] = cfg.generator.world_extent;
    nlohmann::ordered_json w;
    w["straight"] = cfg.generator.weights.straight;
    w["left_turn"] = cfg.generator.weights.left_turn;
    w["right_turn"] = cfg.generator.weights.right_turn;
    w["intersection_yield"] = cfg.generator.weights.intersection_yield;
    j["weights"] = std::move(w);
    return j;
}

DataConfig data_config_from_json(const nlohmann::json& j, const std::string& ctx) {
    DataConfig cfg;
    FieldReader r(j, ctx);
    r.get("scenes", cfg.generator.scenes);
    r.get("seed", cfg.seed);
    r.get("dt", cfg.generator.dt);
    r.get("m_min", cfg.generator.m_min);
    r.get("m_max", cfg.generator.m_max);
    r.get("speed_min", cfg.generator.speed_min);
    r.get("speed_max", cfg.generator.speed_max);
    r.get("radius_min", cfg.generator.radius_min);
    r.get("radius_max", cfg.generator.radius_max);
    r.get("noise_sigma", cfg.generator.noise_sigma);
    r.get("world_extent", cfg.generator.world_extent);
    if (r.has("weights")) {
        FieldReader rw(r.sub("weights"), ctx + ".weights");
        rw.get("straight", cfg.generator.weights.straight);
        rw.get("left_turn", cfg.generator.weights.left_turn);
        rw.get("right_turn", cfg.generator.weights.right_turn);
        rw.get("intersection_yield", cfg.generator.weights.intersection_yield);
        rw.finish();
    }
    r.finish();
    return cfg;
}

nlohmann::ordered_json to_json(const EvalConfig& cfg) {
    nlohmann::ordered_json j;
    j["r_coll"] = cfg.r_coll;
    j["cr_predicted_svs"] = cfg.cr_predicted_svs;
    j["theta_min"] = cfg.theta_min;
    j["theta_max"] = cfg.theta_max;
    j["translations"] = cfg.translations;
    j["translation_extent"] = cfg.translation_extent;
    j["sweep_seed"] = cfg.sweep_seed;
    j["threads"] = cfg.threads;
    return j;
}

EvalConfig eval_config_from_json(const nlohmann::json& j, const std::string& ctx) {
    EvalConfig cfg;
    FieldReader r(j, ctx);
    r.get("r_coll", cfg.r_coll);
    r.get("cr_predicted_svs", cfg.cr_predicted_svs);
    r.get("theta_min", cfg.theta_min);
    r.get("theta_max", cfg.theta_max);
    r.get("translations", cfg.translations);
    r.get("translation_extent", cfg.translation_extent);
    r.get("sweep_seed", cfg.sweep_seed);
    r.get("threads", cfg.threads);
    r.finish();
    return cfg;
}

nlohmann::ordered_json to_json(const RunConfig& cfg) {
    nlohmann::ordered_json j;
    j["model"] = to_json(cfg.model);
    j["data"] = to_json(cfg.data);
    j["train"] = to_json(cfg.train);
    j["eval"] = to_json(cfg.eval);
    j["score_mode"] = to_string(cfg.score_mode);
    return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    FieldReader r(j, "config");
    if (r.has("model")) cfg.model = model_config_from_json(r.sub("model"));
    if (r.has("data")) cfg.data = data_config_from_json(r.sub("data"));
    if (r.has("train")) cfg.train = train_config_from_json(r.sub("train"));
    if (r.has("eval")) cfg.eval = eval_config_from_json(r.sub("eval"));
    std::string mode = to_string(cfg.score_mode);
    r.get("score_mode", mode);
    cfg.score_mode = score_mode_from_string(mode);
    r.finish();

    // the generator inherits horizon settings from the model section
    cfg.data.generator.t_p = cfg.model.t_p;
    cfg.data.generator.t_f = cfg.model.t_f;
    cfg.train.score_mode = cfg.score_mode;
    return cfg;
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    eval.validate();
    data.generator.validate();
}

std::string dump_run_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

RunConfig load_run_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open config: " + path);
    nlohmann::ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw io_error("config " + path + ": " + e.what());
    }
    apply_env_overrides(j);
    return run_config_from_json(j);
}

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

}  // namespace

void apply_env_overrides(nlohmann::ordered_json& j, const char* prefix) {
    const std::string pre(prefix);
    for (char** env = environ; *env != nullptr; ++env) {
        const std::string entry(*env);
        if (entry.rfind(pre, 0) != 0) continue;
        const auto eq = entry.find('=');
        if (eq == std::string::npos) continue;
        const std::string name = entry.substr(pre.size(), eq - pre.size());
        const std::string value = entry.substr(eq + 1);

        // split the key path on double underscores
        std::vector<std::string> path;
        std::size_t pos = 0;
        while (true) {
            const auto sep = name.find("__", pos);
            if (sep == std::string::npos) {
                path.push_back(name.substr(pos));
                break;
            }
            path.push_back(name.substr(pos, sep - pos));
            pos = sep + 2;
        }

        nlohmann::ordered_json* node = &j;
        for (std::size_t d = 0; d + 1 < path.size(); ++d) {
            const std::string want = lower(path[d]);
            nlohmann::ordered_json* child = nullptr;
            for (auto& [key, val] : node->items()) {
                if (lower(key) == want) {
                    child = &val;
                    break;
                }
            }
            if (child == nullptr) child = &(*node)[want];
            node = child;
        }
        const std::string leaf_want = lower(path.back());
        std::string leaf = leaf_want;
        for (auto& [key, val] : node->items()) {
            if (lower(key) == leaf_want) {
                leaf = key;
                break;
            }
        }
        const auto parsed = nlohmann::ordered_json::parse(value, nullptr, false);
        (*node)[leaf] = parsed.is_discarded() ? nlohmann::ordered_json(value) : parsed;
    }
}

}  // namespace equiplan
