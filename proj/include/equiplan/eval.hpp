#pragma once

#include <string>
#include <utility>
#include <vector>

#include "equiplan/decode.hpp"
#include "equiplan/model.hpp"
#include "equiplan/scene.hpp"
#include "equiplan/training.hpp"

namespace equiplan {

struct EvalConfig {
    double r_coll = 1.0;  // disc radius per vehicle; collision below 2*r_coll
    bool cr_predicted_svs = false;  // check collisions against predicted SVs instead of logs
    std::size_t theta_min = 1;
    std::size_t theta_max = 359;
    std::size_t translations = 20;
    double translation_extent = 100.0;
    std::uint64_t sweep_seed = 1234;
    std::size_t threads = 1;

    void validate() const;
};

// (distance at the final step, mean distance over all steps)
std::pair<double, double> l2_metrics(const Tensor& plan, const Tensor& gt);

// Per-scene collision indicators against ground-truth SV futures:
// (collided at final step ? 1 : 0, fraction of colliding steps)
std::pair<double, double> collision_rate(const Tensor& plan,
                                         const std::vector<Tensor>& sv_futures, double r_coll);

// Joint minimum over modes of the mean SV error (averaged / final step).
std::pair<double, double> min_sv_l2(const ModeSet& modes, const std::vector<Tensor>& gt_svs);

Tensor baseline_constant_velocity(const Scene& scene);

struct SceneMetrics {
    double l2_3s = 0.0;
    double l2_avg = 0.0;
    double cr_3s = 0.0;
    double cr_avg = 0.0;
    double minl2_avg = 0.0;
    double minl2_3s = 0.0;
    double selection_error = 0.0;  // 0 when the closest mode was selected
};

struct EvalReport {
    std::vector<SceneMetrics> rows;
    SceneMetrics aggregate;  // arithmetic mean of rows
};

EvalReport evaluate(const Dataset& data, const ModelParams& params, const EvalConfig& cfg,
                    const ForwardOptions& options = {},
                    ScoreMode score_mode = ScoreMode::coordinate_mean);

void write_report_csv(const EvalReport& report, const std::string& path);

// Output stability under input roto-translations: plans are computed on the
// transformed scene, mapped back by the inverse group element and compared
// against the untransformed baseline. `mode_dev` is the worst pointwise
// deviation over all modes and vehicles; `plan_dev` compares selected plans.
struct StabilityCurve {
    std::vector<std::size_t> theta_deg;
    std::vector<double> mode_dev_rot;   // pure rotation
    std::vector<double> plan_dev_rot;
    std::vector<double> mode_dev_rt;    // rotation composed with a random translation
    std::vector<double> plan_dev_rt;

    double max_mode_dev() const;
    double max_plan_dev() const;
};

StabilityCurve equivariance_sweep(const Scene& scene, const ModelParams& params,
                                  const EvalConfig& cfg, const ForwardOptions& options = {},
                                  ScoreMode score_mode = ScoreMode::coordinate_mean);

// Worst per-mode deviation under `count` random pure translations.
double translation_deviation(const Scene& scene, const ModelParams& params,
                             const EvalConfig& cfg, const ForwardOptions& options = {},
                             ScoreMode score_mode = ScoreMode::coordinate_mean);

void write_stability_csv(const StabilityCurve& curve, const std::string& path);

}  // namespace equiplan
