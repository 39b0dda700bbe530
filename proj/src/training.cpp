#include "equiplan/training.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "equiplan/config.hpp"
#include "equiplan/parallel.hpp"

namespace equiplan {

void TrainConfig::validate() const {
    if (batch_size < 1) throw validation_error("batch_size must be positive");
    if (!(lr0 > 0.0)) throw validation_error("lr0 must be positive");
    if (!(lr_decay > 0.0)) throw validation_error("lr_decay must be positive");
    if (lr_decay_every < 1) throw validation_error("lr_decay_every must be positive");
    if (!(alpha >= 0.0)) throw validation_error("alpha must be >= 0");
    if (threads < 1) throw validation_error("threads must be positive");
}

double learning_rate(const TrainConfig& cfg, std::size_t epoch) {
    const auto steps = static_cast<double>(epoch / cfg.lr_decay_every);
    return cfg.lr0 * std::pow(cfg.lr_decay, steps);
}

namespace graph {

namespace {

// Mean L2 over the horizon between decoded mode rows [0, t_f) and a target.
Var horizon_l2(Tape& t, Var traj, std::size_t t_f, Var gt) {
    return t.mean_all(t.rowwise_l2norm(t.sub(t.slice_rows(traj, 0, t_f), gt)));
}

}  // namespace

SceneLoss scene_loss(Model& m, const Decoded& d, const Scene& scene, double alpha,
                     const AblationFlags& ablation, PlanLossMode plan_mode,
                     ScoreMode score_mode) {
    Tape& t = *m.tape;
    SceneLoss out;

    Var gt_ego = t.constant(ego_future(scene));
    Var scores = ego_scores(m, d, score_mode);

    std::vector<Var> ego_err(d.modes);
    std::vector<double> err_values(d.modes);
    for (std::size_t k = 0; k < d.modes; ++k) {
        ego_err[k] = horizon_l2(t, d.at(k, 0), d.t_f, gt_ego);
        err_values[k] = t.val(ego_err[k]).scalar();
    }
    out.closest = argmin(err_values);
    {
        std::vector<double> score_values = t.val(scores).data;
        out.selected = argmax(score_values);
    }

    out.plan = ego_err[plan_mode == PlanLossMode::selected ? out.selected : out.closest];
    out.wta = t.scale(t.pick(t.log_softmax(scores), out.closest), -1.0);
    out.total = t.add(out.plan, out.wta);

    const std::size_t n_sv = d.vehicles - 1;
    if (ablation.prediction_loss && n_sv > 0) {
        std::vector<Var> sv_gt;
        sv_gt.reserve(n_sv);
        for (const auto& gt : sv_futures(scene)) sv_gt.push_back(t.constant(gt));

        std::vector<Var> mode_err(d.modes);
        std::vector<double> mode_values(d.modes);
        for (std::size_t k = 0; k < d.modes; ++k) {
            std::vector<Var> dists;
            dists.reserve(n_sv);
            for (std::size_t i = 1; i < d.vehicles; ++i) {
                dists.push_back(
                    t.rowwise_l2norm(t.sub(t.slice_rows(d.at(k, i), 0, d.t_f), sv_gt[i - 1])));
            }
            mode_err[k] = t.mean_all(t.concat_rows(dists));
            mode_values[k] = t.val(mode_err[k]).scalar();
        }
        out.pred = mode_err[argmin(mode_values)];
        out.total = t.add(out.total, t.scale(out.pred, alpha));
    }
    return out;
}

}  // namespace graph

Tensor ego_future(const Scene& scene) {
    Tensor gt(scene.t_future(), 2);
    for (std::size_t k = 0; k < scene.t_future(); ++k) {
        gt.at(k, 0) = scene.future[0][k].x;
        gt.at(k, 1) = scene.future[0][k].y;
    }
    return gt;
}

std::vector<Tensor> sv_futures(const Scene& scene) {
    std::vector<Tensor> out;
    out.reserve(scene.num_vehicles() - 1);
    for (std::size_t i = 1; i < scene.num_vehicles(); ++i) {
        Tensor gt(scene.t_future(), 2);
        for (std::size_t k = 0; k < scene.t_future(); ++k) {
            gt.at(k, 0) = scene.future[i][k].x;
            gt.at(k, 1) = scene.future[i][k].y;
        }
        out.push_back(std::move(gt));
    }
    return out;
}

namespace {

double mean_horizon_l2(const Tensor& a, std::size_t t_f, const Tensor& gt) {
    double acc = 0.0;
    for (std::size_t k = 0; k < t_f; ++k) {
        acc += std::hypot(a.at(k, 0) - gt.at(k, 0), a.at(k, 1) - gt.at(k, 1));
    }
    return acc / static_cast<double>(t_f);
}

std::vector<double> per_mode_ego_l2(const ModeSet& modes, const Tensor& gt_ego) {
    std::vector<double> err(modes.modes);
    for (std::size_t k = 0; k < modes.modes; ++k) {
        err[k] = mean_horizon_l2(modes.at(k, 0), modes.t_f, gt_ego);
    }
    return err;
}

}  // namespace

double loss_plan(const ModeSet& modes, const Tensor& scores, const Tensor& gt_ego) {
    std::vector<double> ego_scores(modes.modes);
    for (std::size_t k = 0; k < modes.modes; ++k) ego_scores[k] = scores.at(0, k);
    const std::size_t selected = argmax(ego_scores);
    return mean_horizon_l2(modes.at(selected, 0), modes.t_f, gt_ego);
}

WtaResult loss_wta(const std::vector<double>& ego_scores, const ModeSet& modes,
                   const Tensor& gt_ego) {
    if (ego_scores.size() != modes.modes) {
        throw contract_error("score count does not match mode count");
    }
    const std::size_t closest = argmin(per_mode_ego_l2(modes, gt_ego));
    const std::size_t selected = argmax(ego_scores);

    const double m = *std::max_element(ego_scores.begin(), ego_scores.end());
    double lse = 0.0;
    for (double s : ego_scores) lse += std::exp(s - m);
    WtaResult out;
    out.value = std::log(lse) + m - ego_scores[closest];
    out.selection_error = selected == closest ? 0 : 1;
    return out;
}

double loss_pred(const ModeSet& modes, const std::vector<Tensor>& gt_svs) {
    if (gt_svs.empty()) throw contract_error("loss_pred needs at least one SV");
    double best = 0.0;
    for (std::size_t k = 0; k < modes.modes; ++k) {
        // joint mean over all SV-step pairs, matching the scene-level minimum
        double acc = 0.0;
        for (std::size_t i = 0; i < gt_svs.size(); ++i) {
            const Tensor& traj = modes.at(k, i + 1);
            for (std::size_t s = 0; s < modes.t_f; ++s) {
                acc += std::hypot(traj.at(s, 0) - gt_svs[i].at(s, 0),
                                  traj.at(s, 1) - gt_svs[i].at(s, 1));
            }
        }
        acc /= static_cast<double>(gt_svs.size() * modes.t_f);
        if (k == 0 || acc < best) best = acc;
    }
    return best;
}

double total_loss(const ModeSet& modes, const Tensor& scores, const Tensor& gt_ego,
                  const std::vector<Tensor>& gt_svs, double alpha, bool prediction_on) {
    std::vector<double> ego_scores(modes.modes);
    for (std::size_t k = 0; k < modes.modes; ++k) ego_scores[k] = scores.at(0, k);
    double total = loss_plan(modes, scores, gt_ego) + loss_wta(ego_scores, modes, gt_ego).value;
    if (prediction_on && !gt_svs.empty()) total += alpha * loss_pred(modes, gt_svs);
    return total;
}

void adam_step(ModelParams& params, const std::vector<Tensor>& grads, OptimizerState& state,
               double lr, const AdamConfig& adam) {
    std::vector<Tensor*> tensors;
    for_each_param(params, [&](const std::string&, Tensor& t) { tensors.push_back(&t); });
    if (tensors.size() != grads.size()) {
        throw contract_error("gradient registry size mismatch: " +
                             std::to_string(grads.size()) + " grads for " +
                             std::to_string(tensors.size()) + " parameters");
    }
    if (state.m.empty()) {
        for (const Tensor* t : tensors) {
            state.m.emplace_back(t->rows, t->cols);
            state.v.emplace_back(t->rows, t->cols);
        }
    }
    state.step += 1;
    const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < tensors.size(); ++p) {
        Tensor& t = *tensors[p];
        const Tensor& g = grads[p];
        Tensor& m = state.m[p];
        Tensor& v = state.v[p];
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            m.data[i] = adam.beta1 * m.data[i] + (1.0 - adam.beta1) * g.data[i];
            v.data[i] = adam.beta2 * v.data[i] + (1.0 - adam.beta2) * g.data[i] * g.data[i];
            const double mhat = m.data[i] / bc1;
            const double vhat = v.data[i] / bc2;
            t.data[i] -= lr * mhat / (std::sqrt(vhat) + adam.eps);
        }
    }
}

namespace {

struct SceneGradients {
    std::vector<Tensor> grads;
    double loss = 0.0, plan = 0.0, wta = 0.0, pred = 0.0;
    int selection_error = 0;
};

SceneGradients scene_gradients(const ModelParams& params, const Scene& scene,
                               const TrainConfig& cfg) {
    Tape tape;
    graph::Model m = graph::bind(tape, params);
    const graph::Features f = graph::forward(m, scene, cfg.forward_options());
    const graph::Decoded d = graph::decode(m, f.g);
    const graph::SceneLoss loss = graph::scene_loss(m, d, scene, cfg.alpha, cfg.ablation,
                                                    cfg.plan_loss_mode, cfg.score_mode);

    SceneGradients out;
    out.loss = tape.val(loss.total).scalar();
    if (!std::isfinite(out.loss)) {
        throw numeric_error("non-finite loss; first non-finite tensor: " +
                            tape.first_non_finite());
    }
    out.plan = tape.val(loss.plan).scalar();
    out.wta = tape.val(loss.wta).scalar();
    out.pred = loss.pred.valid() ? tape.val(loss.pred).scalar() : 0.0;
    out.selection_error = loss.selected == loss.closest ? 0 : 1;

    tape.backward(loss.total);
    out.grads.reserve(m.param_order.size());
    for (Var v : m.param_order) out.grads.push_back(tape.grad(v));
    return out;
}

}  // namespace

BatchResult batch_gradients(const ModelParams& params, const Dataset& data,
                            const std::vector<std::size_t>& indices, const TrainConfig& cfg) {
    std::vector<SceneGradients> per_scene(indices.size());
    std::vector<std::string> failures(indices.size());
    run_indexed(indices.size(), cfg.threads, [&](std::size_t i) {
        try {
            per_scene[i] = scene_gradients(params, data.scenes[indices[i]], cfg);
        } catch (const std::exception& e) {
            failures[i] = e.what();
        }
    });
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (!failures[i].empty()) {
            throw numeric_error("scene " + std::to_string(indices[i]) + ": " + failures[i]);
        }
    }

    BatchResult out;
    const double inv = 1.0 / static_cast<double>(indices.size());
    out.grads = std::move(per_scene[0].grads);
    for (std::size_t s = 1; s < per_scene.size(); ++s) {
        for (std::size_t p = 0; p < out.grads.size(); ++p) {
            const Tensor& g = per_scene[s].grads[p];
            for (std::size_t i = 0; i < g.data.size(); ++i) {
                out.grads[p].data[i] += g.data[i];
            }
        }
        per_scene[s].grads.clear();
    }
    for (auto& g : out.grads) {
        for (auto& x : g.data) x *= inv;
    }
    for (const auto& s : per_scene) {
        out.loss += s.loss * inv;
        out.plan += s.plan * inv;
        out.wta += s.wta * inv;
        out.pred += s.pred * inv;
        out.selection_accuracy += static_cast<double>(s.selection_error) * inv;
    }
    return out;
}

void train_loop(ModelParams& params, OptimizerState& opt, std::size_t start_epoch,
                const Dataset& data, const TrainConfig& cfg,
                std::vector<EpochRecord>& history, const EpochHook& hook) {
    cfg.validate();
    if (data.empty()) throw validation_error("training dataset is empty");

    std::vector<std::size_t> order(data.size());
    for (std::size_t epoch = start_epoch; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        // Fisher-Yates with a per-epoch substream so resumed runs shuffle
        // identically to uninterrupted ones
        Rng shuffle_rng = Rng::substream(cfg.seed, epoch + 1);
        for (std::size_t i = order.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(
                shuffle_rng.uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        const double lr = learning_rate(cfg, epoch);
        EpochRecord rec;
        rec.epoch = epoch;
        rec.lr = lr;
        std::size_t scenes_seen = 0;
        for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
            const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
            const std::vector<std::size_t> batch(order.begin() + b0, order.begin() + b1);
            BatchResult res;
            try {
                res = batch_gradients(params, data, batch, cfg);
            } catch (const numeric_error& e) {
                throw numeric_error("epoch " + std::to_string(epoch) + ": " + e.what());
            }
            adam_step(params, res.grads, opt, lr);
            const auto n = static_cast<double>(batch.size());
            rec.loss += res.loss * n;
            rec.loss_plan += res.plan * n;
            rec.loss_wta += res.wta * n;
            rec.loss_pred += res.pred * n;
            rec.selection_accuracy += res.selection_accuracy * n;
            scenes_seen += batch.size();
        }
        const double inv = 1.0 / static_cast<double>(scenes_seen);
        rec.loss *= inv;
        rec.loss_plan *= inv;
        rec.loss_wta *= inv;
        rec.loss_pred *= inv;
        rec.selection_accuracy *= inv;
        history.push_back(rec);
        if (hook) hook(epoch + 1, params, opt);
    }
}

TrainResult train(const Dataset& data, const ModelConfig& model_cfg, const TrainConfig& cfg,
                  const EpochHook& hook) {
    TrainResult result;
    result.params = ModelParams::create(model_cfg, cfg.seed);
    train_loop(result.params, result.opt, 0, data, cfg, result.history, hook);
    return result;
}

namespace {

constexpr int kCheckpointVersion = 1;

nlohmann::ordered_json tensor_to_json(const Tensor& t) {
    nlohmann::ordered_json j;
    j["rows"] = t.rows;
    j["cols"] = t.cols;
    j["data"] = t.data;
    return j;
}

Tensor tensor_from_json(const nlohmann::json& j, const std::string& name) {
    if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
        throw io_error("checkpoint tensor '" + name + "' is malformed");
    }
    Tensor t(j["rows"].get<std::size_t>(), j["cols"].get<std::size_t>());
    const auto& data = j["data"];
    if (!data.is_array() || data.size() != t.numel()) {
        throw io_error("checkpoint tensor '" + name + "' has wrong element count");
    }
    for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = data[i].get<double>();
    return t;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::ordered_json j;
    j["version"] = kCheckpointVersion;
    j["model"] = to_json(ckpt.model);
    j["train"] = to_json(ckpt.train);
    j["epoch"] = ckpt.epoch;
    auto& params = j["params"] = nlohmann::ordered_json::object();
    for_each_param(ckpt.params, [&](const std::string& name, const Tensor& t) {
        params[name] = tensor_to_json(t);
    });
    auto& opt = j["opt"] = nlohmann::ordered_json::object();
    opt["step"] = ckpt.opt.step;
    auto& om = opt["m"] = nlohmann::ordered_json::array();
    for (const auto& t : ckpt.opt.m) om.push_back(tensor_to_json(t));
    auto& ov = opt["v"] = nlohmann::ordered_json::array();
    for (const auto& t : ckpt.opt.v) ov.push_back(tensor_to_json(t));

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw io_error("cannot open for writing: " + tmp);
        out << j.dump();
        if (!out) throw io_error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw io_error("corrupt checkpoint " + path + ": " + e.what());
    }
    if (!j.contains("version") || !j["version"].is_number_integer()) {
        throw io_error("checkpoint " + path + " carries no version field");
    }
    if (j["version"].get<int>() != kCheckpointVersion) {
        throw io_error("checkpoint " + path + " has unsupported version " +
                       std::to_string(j["version"].get<int>()));
    }
    for (const char* field : {"model", "train", "epoch", "params", "opt"}) {
        if (!j.contains(field)) {
            throw io_error("checkpoint " + path + " is missing field '" + field + "'");
        }
    }

    Checkpoint ckpt;
    ckpt.model = model_config_from_json(j["model"], "model");
    ckpt.train = train_config_from_json(j["train"], "train");
    ckpt.epoch = j["epoch"].get<std::size_t>();
    ckpt.params = ModelParams::create(ckpt.model, 0);
    for_each_param(ckpt.params, [&](const std::string& name, Tensor& t) {
        if (!j["params"].contains(name)) {
            throw io_error("checkpoint " + path + " is missing parameter '" + name + "'");
        }
        Tensor loaded = tensor_from_json(j["params"][name], name);
        if (!loaded.same_shape(t)) {
            throw io_error("checkpoint parameter '" + name + "' has shape " +
                           loaded.shape_str() + ", expected " + t.shape_str());
        }
        t = std::move(loaded);
    });
    ckpt.opt.step = j["opt"]["step"].get<std::size_t>();
    for (std::size_t i = 0; i < j["opt"]["m"].size(); ++i) {
        ckpt.opt.m.push_back(tensor_from_json(j["opt"]["m"][i], "opt.m"));
    }
    for (std::size_t i = 0; i < j["opt"]["v"].size(); ++i) {
        ckpt.opt.v.push_back(tensor_from_json(j["opt"]["v"][i], "opt.v"));
    }
    return ckpt;
}

void write_history(const std::vector<EpochRecord>& history, const AblationFlags& flags,
                   const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    out << "# prediction_loss=" << (flags.prediction_loss ? 1 : 0) << "\n";
    out << "# route_attraction=" << (flags.route_attraction ? 1 : 0) << "\n";
    out << "# equivariant_init=" << (flags.equivariant_init ? 1 : 0) << "\n";
    out << "epoch,lr,loss,loss_plan,loss_wta,loss_pred,selection_accuracy\n";
    out.precision(17);
    for (const auto& r : history) {
        out << r.epoch << ',' << r.lr << ',' << r.loss << ',' << r.loss_plan << ','
            << r.loss_wta << ',' << r.loss_pred << ',' << r.selection_accuracy << "\n";
    }
    if (!out) throw io_error("write failed: " + path);
}

}  // namespace equiplan
