#include "equiplan/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "equiplan/parallel.hpp"

namespace equiplan {

void EvalConfig::validate() const {
    if (!(r_coll > 0.0)) throw validation_error("r_coll must be positive");
    if (theta_min < 1 || theta_max > 359 || theta_min > theta_max) {
        throw validation_error("theta grid must lie within [1, 359] degrees");
    }
    if (!(translation_extent >= 0.0)) {
        throw validation_error("translation_extent must be >= 0");
    }
    if (threads < 1) throw validation_error("threads must be positive");
}

std::pair<double, double> l2_metrics(const Tensor& plan, const Tensor& gt) {
    if (!plan.same_shape(gt) || plan.cols != 2 || plan.rows == 0) {
        throw contract_error("l2_metrics shape mismatch: " + plan.shape_str() + " vs " +
                             gt.shape_str());
    }
    double sum = 0.0, last = 0.0;
    for (std::size_t k = 0; k < plan.rows; ++k) {
        last = std::hypot(plan.at(k, 0) - gt.at(k, 0), plan.at(k, 1) - gt.at(k, 1));
        sum += last;
    }
    return {last, sum / static_cast<double>(plan.rows)};
}

std::pair<double, double> collision_rate(const Tensor& plan,
                                         const std::vector<Tensor>& sv_futures, double r_coll) {
    if (!(r_coll > 0.0)) throw contract_error("r_coll must be positive");
    const double threshold = 2.0 * r_coll;
    std::size_t colliding_steps = 0;
    bool final_collision = false;
    for (std::size_t k = 0; k < plan.rows; ++k) {
        double closest = std::numeric_limits<double>::infinity();
        for (const auto& sv : sv_futures) {
            closest = std::min(closest, std::hypot(plan.at(k, 0) - sv.at(k, 0),
                                                   plan.at(k, 1) - sv.at(k, 1)));
        }
        if (closest < threshold) {
            ++colliding_steps;
            if (k + 1 == plan.rows) final_collision = true;
        }
    }
    return {final_collision ? 1.0 : 0.0,
            static_cast<double>(colliding_steps) / static_cast<double>(plan.rows)};
}

std::pair<double, double> min_sv_l2(const ModeSet& modes, const std::vector<Tensor>& gt_svs) {
    double best_avg = std::numeric_limits<double>::infinity();
    double best_3s = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < modes.modes; ++k) {
        double avg = 0.0, fin = 0.0;
        for (std::size_t i = 0; i < gt_svs.size(); ++i) {
            const Tensor& traj = modes.at(k, i + 1);
            const Tensor& gt = gt_svs[i];
            for (std::size_t s = 0; s < modes.t_f; ++s) {
                const double d = std::hypot(traj.at(s, 0) - gt.at(s, 0),
                                            traj.at(s, 1) - gt.at(s, 1));
                avg += d;
                if (s + 1 == modes.t_f) fin += d;
            }
        }
        avg /= static_cast<double>(gt_svs.size() * modes.t_f);
        fin /= static_cast<double>(gt_svs.size());
        best_avg = std::min(best_avg, avg);
        best_3s = std::min(best_3s, fin);
    }
    return {best_avg, best_3s};
}

Tensor baseline_constant_velocity(const Scene& scene) {
    const auto& past = scene.past[0];
    if (past.size() < 2) throw contract_error("constant-velocity baseline needs t_p >= 2");
    const Vec2 step = past.back() - past[past.size() - 2];
    Tensor plan(scene.t_future(), 2);
    Vec2 pos = past.back();
    for (std::size_t k = 0; k < scene.t_future(); ++k) {
        pos = pos + step;
        plan.at(k, 0) = pos.x;
        plan.at(k, 1) = pos.y;
    }
    return plan;
}

EvalReport evaluate(const Dataset& data, const ModelParams& params, const EvalConfig& cfg,
                    const ForwardOptions& options, ScoreMode score_mode) {
    cfg.validate();
    if (data.empty()) throw validation_error("evaluation dataset is empty");

    EvalReport report;
    report.rows.resize(data.size());
    run_indexed(data.size(), cfg.threads, [&](std::size_t s) {
        const Scene& scene = data.scenes[s];
        const PlanResult res = plan_scene(scene, params, options, score_mode);
        const Tensor gt = ego_future(scene);
        const std::vector<Tensor> svs = sv_futures(scene);

        SceneMetrics& row = report.rows[s];
        std::tie(row.l2_3s, row.l2_avg) = l2_metrics(res.plan.trajectory, gt);
        std::vector<Tensor> cr_svs = svs;
        if (cfg.cr_predicted_svs) {
            for (std::size_t i = 1; i < res.modes.vehicles; ++i) {
                const Tensor& traj = res.modes.at(res.plan.mode_index, i);
                Tensor clipped(res.modes.t_f, 2);
                std::copy(traj.data.begin(), traj.data.begin() + res.modes.t_f * 2,
                          clipped.data.begin());
                cr_svs[i - 1] = std::move(clipped);
            }
        }
        std::tie(row.cr_3s, row.cr_avg) = collision_rate(res.plan.trajectory, cr_svs, cfg.r_coll);
        std::tie(row.minl2_avg, row.minl2_3s) = min_sv_l2(res.modes, svs);

        std::vector<double> mode_err(res.modes.modes);
        for (std::size_t k = 0; k < res.modes.modes; ++k) {
            mode_err[k] = l2_metrics(
                              Tensor(res.modes.t_f, 2,
                                     {res.modes.at(k, 0).data.begin(),
                                      res.modes.at(k, 0).data.begin() + res.modes.t_f * 2}),
                              gt)
                              .second;
        }
        row.selection_error = argmin(mode_err) == res.plan.mode_index ? 0.0 : 1.0;
    });

    SceneMetrics& agg = report.aggregate;
    const double inv = 1.0 / static_cast<double>(report.rows.size());
    for (const auto& row : report.rows) {
        agg.l2_3s += row.l2_3s * inv;
        agg.l2_avg += row.l2_avg * inv;
        agg.cr_3s += row.cr_3s * inv;
        agg.cr_avg += row.cr_avg * inv;
        agg.minl2_avg += row.minl2_avg * inv;
        agg.minl2_3s += row.minl2_3s * inv;
        agg.selection_error += row.selection_error * inv;
    }
    return report;
}

void write_report_csv(const EvalReport& report, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out.precision(17);
    out << "scene,l2_3s,l2_avg,cr_3s,cr_avg,minl2_avg,minl2_3s,selection_error\n";
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        const auto& r = report.rows[i];
        out << i << ',' << r.l2_3s << ',' << r.l2_avg << ',' << r.cr_3s << ',' << r.cr_avg
            << ',' << r.minl2_avg << ',' << r.minl2_3s << ',' << r.selection_error << "\n";
    }
    const auto& a = report.aggregate;
    out << "aggregate," << a.l2_3s << ',' << a.l2_avg << ',' << a.cr_3s << ',' << a.cr_avg
        << ',' << a.minl2_avg << ',' << a.minl2_3s << ',' << a.selection_error << "\n";
    if (!out) throw io_error("write failed: " + path);
}

namespace {

struct Deviation {
    double mode = 0.0;
    double plan = 0.0;
};

// Plans on the transformed scene, maps the outputs back through the inverse
// group element and measures deviation from the baseline outputs.
Deviation round_trip_deviation(const Scene& scene, const ModelParams& params, const Se2& g,
                               const PlanResult& baseline, const ForwardOptions& options,
                               ScoreMode score_mode) {
    const PlanResult moved = plan_scene(apply_se2(scene, g), params, options, score_mode);
    const Se2 inv = g.inverse();

    Deviation dev;
    for (std::size_t idx = 0; idx < moved.modes.traj.size(); ++idx) {
        const Tensor& a = moved.modes.traj[idx];
        const Tensor& b = baseline.modes.traj[idx];
        for (std::size_t r = 0; r < a.rows; ++r) {
            const Vec2 back = inv.apply({a.at(r, 0), a.at(r, 1)});
            dev.mode = std::max(dev.mode,
                                std::hypot(back.x - b.at(r, 0), back.y - b.at(r, 1)));
        }
    }
    double plan_sum = 0.0;
    for (std::size_t r = 0; r < moved.plan.trajectory.rows; ++r) {
        const Vec2 back =
            inv.apply({moved.plan.trajectory.at(r, 0), moved.plan.trajectory.at(r, 1)});
        plan_sum += std::hypot(back.x - baseline.plan.trajectory.at(r, 0),
                               back.y - baseline.plan.trajectory.at(r, 1));
    }
    dev.plan = plan_sum / static_cast<double>(moved.plan.trajectory.rows);
    return dev;
}

}  // namespace

StabilityCurve equivariance_sweep(const Scene& scene, const ModelParams& params,
                                  const EvalConfig& cfg, const ForwardOptions& options,
                                  ScoreMode score_mode) {
    cfg.validate();
    const PlanResult baseline = plan_scene(scene, params, options, score_mode);

    StabilityCurve curve;
    for (std::size_t deg = cfg.theta_min; deg <= cfg.theta_max; ++deg) {
        const double theta = static_cast<double>(deg) * M_PI / 180.0;
        const Deviation rot = round_trip_deviation(scene, params, Se2{theta, {0, 0}}, baseline,
                                                   options, score_mode);

        Rng rng = Rng::substream(cfg.sweep_seed, deg);
        const Se2 rt{theta,
                     {rng.uniform(-cfg.translation_extent, cfg.translation_extent),
                      rng.uniform(-cfg.translation_extent, cfg.translation_extent)}};
        const Deviation moved = round_trip_deviation(scene, params, rt, baseline, options,
                                                     score_mode);

        curve.theta_deg.push_back(deg);
        curve.mode_dev_rot.push_back(rot.mode);
        curve.plan_dev_rot.push_back(rot.plan);
        curve.mode_dev_rt.push_back(moved.mode);
        curve.plan_dev_rt.push_back(moved.plan);
    }
    return curve;
}

double translation_deviation(const Scene& scene, const ModelParams& params,
                             const EvalConfig& cfg, const ForwardOptions& options,
                             ScoreMode score_mode) {
    const PlanResult baseline = plan_scene(scene, params, options, score_mode);
    Rng rng = Rng::substream(cfg.sweep_seed, 0x7a);
    double worst = 0.0;
    for (std::size_t i = 0; i < cfg.translations; ++i) {
        const Se2 g{0.0,
                    {rng.uniform(-cfg.translation_extent, cfg.translation_extent),
                     rng.uniform(-cfg.translation_extent, cfg.translation_extent)}};
        worst = std::max(
            worst, round_trip_deviation(scene, params, g, baseline, options, score_mode).mode);
    }
    return worst;
}

double StabilityCurve::max_mode_dev() const {
    double worst = 0.0;
    for (double d : mode_dev_rot) worst = std::max(worst, d);
    for (double d : mode_dev_rt) worst = std::max(worst, d);
    return worst;
}

double StabilityCurve::max_plan_dev() const {
    double worst = 0.0;
    for (double d : plan_dev_rot) worst = std::max(worst, d);
    for (double d : plan_dev_rt) worst = std::max(worst, d);
    return worst;
}

void write_stability_csv(const StabilityCurve& curve, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out.precision(17);
    out << "theta_deg,mode_dev_rot,plan_dev_rot,mode_dev_rt,plan_dev_rt\n";
    for (std::size_t i = 0; i < curve.theta_deg.size(); ++i) {
        out << curve.theta_deg[i] << ',' << curve.mode_dev_rot[i] << ','
            << curve.plan_dev_rot[i] << ',' << curve.mode_dev_rt[i] << ','
            << curve.plan_dev_rt[i] << "\n";
    }
    if (!out) throw io_error("write failed: " + path);
}

}  // namespace equiplan
