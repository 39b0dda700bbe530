#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "equiplan/decode.hpp"
#include "equiplan/model.hpp"
#include "equiplan/scene.hpp"

namespace equiplan {

struct AblationFlags {
    bool prediction_loss = true;
    bool route_attraction = true;
    bool equivariant_init = true;
};

// Which ego mode the plan loss differentiates through. The winner-takes-all
// term, not the plan term, is responsible for moving the selector.
enum class PlanLossMode { selected, closest };

struct TrainConfig {
    std::size_t epochs = 400;
    std::size_t batch_size = 512;
    double lr0 = 5e-4;
    double lr_decay = 0.8;
    std::size_t lr_decay_every = 2;
    double alpha = 0.1;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    AblationFlags ablation;
    PlanLossMode plan_loss_mode = PlanLossMode::selected;
    ScoreMode score_mode = ScoreMode::coordinate_mean;

    void validate() const;
    ForwardOptions forward_options() const {
        return {ablation.route_attraction, ablation.equivariant_init};
    }
};

double learning_rate(const TrainConfig& cfg, std::size_t epoch);

namespace graph {

struct SceneLoss {
    Var total{}, plan{}, wta{}, pred{};  // pred stays invalid when ablated
    std::size_t selected = 0;
    std::size_t closest = 0;
};

SceneLoss scene_loss(Model& m, const Decoded& d, const Scene& scene, double alpha,
                     const AblationFlags& ablation, PlanLossMode plan_mode,
                     ScoreMode score_mode);

}  // namespace graph

// Value-level loss operations (scores laid out as vehicles x modes).
double loss_plan(const ModeSet& modes, const Tensor& scores, const Tensor& gt_ego);

struct WtaResult {
    double value = 0.0;
    int selection_error = 0;  // 0 when the closest mode is selected, else 1
};
WtaResult loss_wta(const std::vector<double>& ego_scores, const ModeSet& modes,
                   const Tensor& gt_ego);

double loss_pred(const ModeSet& modes, const std::vector<Tensor>& gt_svs);

double total_loss(const ModeSet& modes, const Tensor& scores, const Tensor& gt_ego,
                  const std::vector<Tensor>& gt_svs, double alpha, bool prediction_on = true);

// Ground-truth tensors of a scene (ego t_f x 2, SVs each t_f x 2).
Tensor ego_future(const Scene& scene);
std::vector<Tensor> sv_futures(const Scene& scene);

struct OptimizerState {
    std::vector<Tensor> m;  // first moments, registry order
    std::vector<Tensor> v;  // second moments
    std::size_t step = 0;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One Adam update; `grads` aligned with the for_each_param registry order.
void adam_step(ModelParams& params, const std::vector<Tensor>& grads, OptimizerState& state,
               double lr, const AdamConfig& adam = {});

struct EpochRecord {
    std::size_t epoch = 0;
    double lr = 0.0;
    double loss = 0.0;
    double loss_plan = 0.0;
    double loss_wta = 0.0;
    double loss_pred = 0.0;
    double selection_accuracy = 0.0;  // mean 0/1 error, 0 = always correct
};

struct TrainResult {
    ModelParams params;
    OptimizerState opt;
    std::vector<EpochRecord> history;
};

// Called after each completed epoch (checkpointing, progress logging).
using EpochHook =
    std::function<void(std::size_t epoch, const ModelParams&, const OptimizerState&)>;

// Mean gradient of the summed scene losses over `scenes`; also returns the
// per-scene loss records. Exposed for gradient-audit tests.
struct BatchResult {
    std::vector<Tensor> grads;
    double loss = 0.0, plan = 0.0, wta = 0.0, pred = 0.0, selection_accuracy = 0.0;
};
BatchResult batch_gradients(const ModelParams& params, const Dataset& data,
                            const std::vector<std::size_t>& indices, const TrainConfig& cfg);

TrainResult train(const Dataset& data, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const EpochHook& hook = nullptr);

// Continues training from an existing state; epochs [start_epoch, cfg.epochs).
void train_loop(ModelParams& params, OptimizerState& opt, std::size_t start_epoch,
                const Dataset& data, const TrainConfig& cfg,
                std::vector<EpochRecord>& history, const EpochHook& hook = nullptr);

// Versioned JSON checkpoint; writes are atomic (temp file + rename).
struct Checkpoint {
    ModelConfig model;
    TrainConfig train;
    std::size_t epoch = 0;  // completed epochs
    ModelParams params;
    OptimizerState opt;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

void write_history(const std::vector<EpochRecord>& history, const AblationFlags& flags,
                   const std::string& path);

}  // namespace equiplan
