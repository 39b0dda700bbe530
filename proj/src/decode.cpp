#include "equiplan/decode.hpp"

namespace equiplan {

namespace graph {

Decoded decode(Model& m, const std::vector<Var>& g) {
    Tape& t = *m.tape;
    Decoded d;
    d.modes = m.cfg.modes;
    d.vehicles = g.size();
    d.t_f = m.cfg.t_f;

    // mean position over all vehicles and channels
    Var stacked = g.size() == 1 ? g[0] : t.concat_rows(g);
    d.mean_pos = t.mean_rows(stacked);
    Var neg_mean = t.scale(d.mean_pos, -1.0);

    d.traj.reserve(d.modes * d.vehicles);
    for (std::size_t k = 0; k < d.modes; ++k) {
        for (std::size_t i = 0; i < d.vehicles; ++i) {
            Var centered = t.add_rowvec(g[i], neg_mean);
            d.traj.push_back(t.add_rowvec(t.matmul(m.decoders[k], centered), d.mean_pos));
        }
    }
    return d;
}

Var mode_score(Model& m, const Decoded& d, std::size_t mode, std::size_t vehicle,
               ScoreMode score_mode) {
    Tape& t = *m.tape;
    Var indicator = t.slice_rows(d.at(mode, vehicle), d.t_f, 1);
    if (score_mode == ScoreMode::coordinate_mean) {
        return t.mean_all(indicator);
    }
    return t.scale(t.rowwise_l2norm(t.sub(indicator, d.mean_pos)), -1.0);
}

Var ego_scores(Model& m, const Decoded& d, ScoreMode score_mode) {
    std::vector<Var> scores;
    scores.reserve(d.modes);
    for (std::size_t k = 0; k < d.modes; ++k) {
        scores.push_back(mode_score(m, d, k, 0, score_mode));
    }
    return m.tape->concat_rows(scores);
}

}  // namespace graph

ModeSet decode(const EquivariantState& g, const ModelParams& params) {
    Tape tape;
    graph::Model m = graph::bind(tape, params);
    std::vector<Var> gv;
    gv.reserve(g.g.size());
    for (const auto& x : g.g) gv.push_back(tape.constant(x));
    const graph::Decoded d = graph::decode(m, gv);

    ModeSet out;
    out.modes = d.modes;
    out.vehicles = d.vehicles;
    out.t_f = d.t_f;
    out.mean_pos = tape.val(d.mean_pos);
    out.traj.reserve(d.traj.size());
    for (Var v : d.traj) out.traj.push_back(tape.val(v));
    return out;
}

Tensor mode_scores(const ModeSet& modes, ScoreMode score_mode) {
    Tensor out(modes.vehicles, modes.modes);
    for (std::size_t i = 0; i < modes.vehicles; ++i) {
        for (std::size_t k = 0; k < modes.modes; ++k) {
            const Tensor& traj = modes.at(k, i);
            const double x = traj.at(modes.t_f, 0);
            const double y = traj.at(modes.t_f, 1);
            if (score_mode == ScoreMode::coordinate_mean) {
                out.at(i, k) = 0.5 * (x + y);
            } else {
                out.at(i, k) = -std::hypot(x - modes.mean_pos.at(0, 0),
                                           y - modes.mean_pos.at(0, 1));
            }
        }
    }
    return out;
}

Plan select_plan(const ModeSet& modes, const Tensor& scores) {
    if (scores.rows != modes.vehicles || scores.cols != modes.modes) {
        throw contract_error("score matrix " + scores.shape_str() +
                             " does not match mode set (" + std::to_string(modes.vehicles) +
                             " vehicles, " + std::to_string(modes.modes) + " modes)");
    }
    Plan plan;
    plan.scores.resize(modes.modes);
    for (std::size_t k = 0; k < modes.modes; ++k) plan.scores[k] = scores.at(0, k);
    plan.mode_index = argmax(plan.scores);

    const Tensor& traj = modes.at(plan.mode_index, 0);
    plan.trajectory = Tensor(modes.t_f, 2);
    std::copy(traj.data.begin(), traj.data.begin() + modes.t_f * 2,
              plan.trajectory.data.begin());
    return plan;
}

PlanResult plan_scene(const Scene& scene, const ModelParams& params,
                      const ForwardOptions& options, ScoreMode score_mode) {
    Tape tape;
    graph::Model m = graph::bind(tape, params);
    const graph::Features f = graph::forward(m, scene, options);
    const graph::Decoded d = graph::decode(m, f.g);

    PlanResult out;
    out.modes.modes = d.modes;
    out.modes.vehicles = d.vehicles;
    out.modes.t_f = d.t_f;
    out.modes.mean_pos = tape.val(d.mean_pos);
    for (Var v : d.traj) out.modes.traj.push_back(tape.val(v));
    out.plan = select_plan(out.modes, mode_scores(out.modes, score_mode));
    return out;
}

}  // namespace equiplan
