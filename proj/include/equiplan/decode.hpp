#pragma once

#include <vector>

#include "equiplan/model.hpp"

namespace equiplan {

// How mode probabilities are read off the indicator point: `coordinate_mean`
// takes the literal mean of its two coordinates; `invariant` scores by the
// negated distance to the mean position, which is stable under rotations.
enum class ScoreMode { coordinate_mean, invariant };

// K jointly decoded futures for all vehicles. Each trajectory carries one
// extra row beyond the horizon, the score indicator point.
struct ModeSet {
    std::size_t modes = 0;
    std::size_t vehicles = 0;
    std::size_t t_f = 0;
    std::vector<Tensor> traj;  // modes*vehicles entries of (t_f + 1) x 2
    Tensor mean_pos;           // 1 x 2, the decoder's reference position

    const Tensor& at(std::size_t mode, std::size_t vehicle) const {
        return traj[mode * vehicles + vehicle];
    }
};

struct Plan {
    Tensor trajectory;  // t_f x 2, indicator point excluded
    std::size_t mode_index = 0;
    std::vector<double> scores;  // ego scores, one per mode
};

namespace graph {

struct Decoded {
    std::size_t modes = 0;
    std::size_t vehicles = 0;
    std::size_t t_f = 0;
    std::vector<Var> traj;  // modes*vehicles entries
    Var mean_pos;

    Var at(std::size_t mode, std::size_t vehicle) const {
        return traj[mode * vehicles + vehicle];
    }
};

Decoded decode(Model& m, const std::vector<Var>& g);
Var mode_score(Model& m, const Decoded& d, std::size_t mode, std::size_t vehicle,
               ScoreMode score_mode);
// Ego scores stacked into one K x 1 vector node.
Var ego_scores(Model& m, const Decoded& d, ScoreMode score_mode);

}  // namespace graph

ModeSet decode(const EquivariantState& g, const ModelParams& params);
Tensor mode_scores(const ModeSet& modes, ScoreMode score_mode = ScoreMode::coordinate_mean);
Plan select_plan(const ModeSet& modes, const Tensor& scores);

// Forward + decode + selection in one shot on a scratch tape.
struct PlanResult {
    Plan plan;
    ModeSet modes;
};
PlanResult plan_scene(const Scene& scene, const ModelParams& params,
                      const ForwardOptions& options = {},
                      ScoreMode score_mode = ScoreMode::coordinate_mean);

}  // namespace equiplan
