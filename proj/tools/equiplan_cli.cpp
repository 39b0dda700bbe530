// Command-line front end: scene generation, training, open-loop evaluation
// and the rotation-sweep stability check, wired through one JSON config.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>

#include "equiplan/config.hpp"
#include "equiplan/eval.hpp"
#include "equiplan/training.hpp"

namespace {

using namespace equiplan;

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitThreshold = 4;

struct CliState {
    std::string config_path;
    std::size_t threads = 0;  // 0 = keep config value
    RunConfig cfg;

    void load() {
        if (!config_path.empty()) {
            cfg = load_run_config_file(config_path);
        } else {
            nlohmann::ordered_json base = to_json(RunConfig{});
            apply_env_overrides(base);
            cfg = run_config_from_json(base);
        }
        if (threads > 0) {
            cfg.train.threads = threads;
            cfg.eval.threads = threads;
        }
        cfg.validate();
    }
};

int cmd_generate(CliState& state, const std::string& out,
                 std::optional<std::size_t> scenes, std::optional<std::uint64_t> seed) {
    state.load();
    if (scenes) state.cfg.data.generator.scenes = *scenes;
    if (seed) state.cfg.data.seed = *seed;

    const Dataset ds = generate_synthetic(state.cfg.data.generator, state.cfg.data.seed);
    save_scenes(ds, out);
    std::cout << "wrote " << ds.size() << " scenes (seed " << state.cfg.data.seed << ") to "
              << out << "\n";
    return kExitOk;
}

int cmd_train(CliState& state, const std::string& data_path, const std::string& out_dir,
              const std::string& resume, std::optional<std::size_t> epochs,
              std::optional<std::uint64_t> seed, std::size_t checkpoint_every) {
    state.load();
    if (epochs) state.cfg.train.epochs = *epochs;
    if (seed) state.cfg.train.seed = *seed;

    std::filesystem::create_directories(out_dir);
    const std::string ckpt_path = (std::filesystem::path(out_dir) / "checkpoint.json").string();
    const std::string hist_path = (std::filesystem::path(out_dir) / "history.csv").string();

    ModelParams params = ModelParams::create(state.cfg.model, state.cfg.train.seed);
    OptimizerState opt;
    std::size_t start_epoch = 0;
    if (!resume.empty()) {
        Checkpoint ckpt = load_checkpoint(resume);
        if (ckpt.model.channels != state.cfg.model.channels ||
            ckpt.model.hidden != state.cfg.model.hidden ||
            ckpt.model.relations != state.cfg.model.relations ||
            ckpt.model.modes != state.cfg.model.modes ||
            ckpt.model.blocks != state.cfg.model.blocks ||
            ckpt.model.t_p != state.cfg.model.t_p || ckpt.model.t_f != state.cfg.model.t_f) {
            throw validation_error("checkpoint model shape does not match the config");
        }
        params = std::move(ckpt.params);
        opt = std::move(ckpt.opt);
        start_epoch = ckpt.epoch;
        std::cout << "resuming from " << resume << " at epoch " << start_epoch << "\n";
    }

    const Dataset data =
        load_scenes(data_path, state.cfg.model.t_p, state.cfg.model.t_f);

    std::vector<EpochRecord> history;
    const auto hook = [&](std::size_t epoch, const ModelParams& p, const OptimizerState& o) {
        const EpochRecord& rec = history.back();
        std::cout << "epoch " << rec.epoch << " lr " << rec.lr << " loss " << rec.loss
                  << " plan " << rec.loss_plan << " wta " << rec.loss_wta << " pred "
                  << rec.loss_pred << "\n";
        if (epoch % checkpoint_every == 0 || epoch == state.cfg.train.epochs) {
            save_checkpoint({state.cfg.model, state.cfg.train, epoch, p, o}, ckpt_path);
            write_history(history, state.cfg.train.ablation, hist_path);
        }
    };
    train_loop(params, opt, start_epoch, data, state.cfg.train, history, hook);
    // epochs == 0 (or an immediate resume) still leaves a loadable checkpoint
    if (!std::filesystem::exists(ckpt_path) || history.empty()) {
        save_checkpoint({state.cfg.model, state.cfg.train, start_epoch, params, opt}, ckpt_path);
        write_history(history, state.cfg.train.ablation, hist_path);
    }
    std::cout << "checkpoint: " << ckpt_path << "\nhistory: " << hist_path << "\n";
    return kExitOk;
}

int cmd_eval(CliState& state, const std::string& ckpt_path, const std::string& data_path,
             const std::string& out) {
    state.load();
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Dataset data = load_scenes(data_path, ckpt.model.t_p, ckpt.model.t_f);

    const EvalReport report = evaluate(data, ckpt.params, state.cfg.eval,
                                       ckpt.train.forward_options(), state.cfg.score_mode);
    if (!out.empty()) write_report_csv(report, out);
    const auto& a = report.aggregate;
    std::cout << "scenes " << report.rows.size() << "\n"
              << "l2_3s " << a.l2_3s << " m\n"
              << "l2_avg " << a.l2_avg << " m\n"
              << "cr_3s " << a.cr_3s * 100.0 << " %\n"
              << "cr_avg " << a.cr_avg * 100.0 << " %\n"
              << "minl2_avg " << a.minl2_avg << " m\n"
              << "minl2_3s " << a.minl2_3s << " m\n"
              << "selection_error " << a.selection_error << "\n";
    return kExitOk;
}

int cmd_equivariance(CliState& state, const std::string& ckpt_path,
                     const std::string& data_path, const std::string& out, double tolerance,
                     bool break_equivariance) {
    state.load();
    const Checkpoint ckpt = load_checkpoint(ckpt_path);
    const Dataset data = load_scenes(data_path, ckpt.model.t_p, ckpt.model.t_f);
    if (data.empty()) throw validation_error("equivariance sweep needs at least one scene");

    ForwardOptions options = ckpt.train.forward_options();
    if (break_equivariance) options.equivariant_init = false;

    StabilityCurve merged;
    double translation_dev = 0.0;
    for (const Scene& scene : data.scenes) {
        const StabilityCurve curve = equivariance_sweep(scene, ckpt.params, state.cfg.eval,
                                                        options, state.cfg.score_mode);
        if (merged.theta_deg.empty()) {
            merged = curve;
        } else {
            for (std::size_t i = 0; i < merged.theta_deg.size(); ++i) {
                merged.mode_dev_rot[i] = std::max(merged.mode_dev_rot[i], curve.mode_dev_rot[i]);
                merged.plan_dev_rot[i] = std::max(merged.plan_dev_rot[i], curve.plan_dev_rot[i]);
                merged.mode_dev_rt[i] = std::max(merged.mode_dev_rt[i], curve.mode_dev_rt[i]);
                merged.plan_dev_rt[i] = std::max(merged.plan_dev_rt[i], curve.plan_dev_rt[i]);
            }
        }
        translation_dev = std::max(
            translation_dev, translation_deviation(scene, ckpt.params, state.cfg.eval, options,
                                                   state.cfg.score_mode));
    }
    if (!out.empty()) write_stability_csv(merged, out);

    double mean_mode = 0.0;
    for (std::size_t i = 0; i < merged.theta_deg.size(); ++i) {
        mean_mode += merged.mode_dev_rot[i] + merged.mode_dev_rt[i];
    }
    mean_mode /= static_cast<double>(2 * merged.theta_deg.size());
    const double max_mode = std::max(merged.max_mode_dev(), translation_dev);

    std::cout << "thetas " << merged.theta_deg.size() << "\n"
              << "max per-mode deviation " << max_mode << " m\n"
              << "mean per-mode deviation " << mean_mode << " m\n"
              << "max plan deviation " << merged.max_plan_dev() << " m\n"
              << "max pure-translation deviation " << translation_dev << " m\n";
    if (max_mode > tolerance) {
        std::cout << "FAIL: per-mode deviation exceeds tolerance " << tolerance << " m\n";
        return kExitThreshold;
    }
    std::cout << "PASS: per-mode deviation within " << tolerance << " m\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SE(2)-equivariant joint prediction and planning"};
    app.require_subcommand(1);

    CliState state;
    app.add_option("--config", state.config_path, "JSON run configuration file");
    app.add_option("--threads", state.threads, "cap worker threads (overrides config)");
    app.footer("Configuration keys and defaults:\n" + dump_run_config(RunConfig{}) +
               "Environment overrides: EQUIPLAN_<SECTION>__<KEY>=value, e.g. "
               "EQUIPLAN_TRAIN__BATCH_SIZE=64.");

    auto* gen = app.add_subcommand("generate", "write a synthetic scene file");
    std::string gen_out = "scenes.jsonl";
    std::optional<std::size_t> gen_scenes;
    std::optional<std::uint64_t> gen_seed;
    gen->add_option("--out", gen_out, "output scene file")->capture_default_str();
    gen->add_option("--scenes", gen_scenes, "number of scenes (overrides config)");
    gen->add_option("--seed", gen_seed, "generator seed (overrides config)");

    auto* tr = app.add_subcommand("train", "train a model on a scene file");
    std::string tr_data, tr_out = "run", tr_resume;
    std::optional<std::size_t> tr_epochs;
    std::optional<std::uint64_t> tr_seed;
    std::size_t tr_ckpt_every = 1;
    tr->add_option("--data", tr_data, "training scene file")->required();
    tr->add_option("--out", tr_out, "output directory")->capture_default_str();
    tr->add_option("--resume", tr_resume, "checkpoint to continue from");
    tr->add_option("--epochs", tr_epochs, "epoch count (overrides config)");
    tr->add_option("--seed", tr_seed, "training seed (overrides config)");
    tr->add_option("--checkpoint-every", tr_ckpt_every, "epochs between checkpoints")
        ->capture_default_str();

    auto* ev = app.add_subcommand("eval", "open-loop metrics for a checkpoint");
    std::string ev_ckpt, ev_data, ev_out;
    ev->add_option("--checkpoint", ev_ckpt, "checkpoint file")->required();
    ev->add_option("--data", ev_data, "evaluation scene file")->required();
    ev->add_option("--out", ev_out, "per-scene report CSV");

    auto* eq = app.add_subcommand("equivariance", "rotation-sweep stability check");
    std::string eq_ckpt, eq_data, eq_out;
    double eq_tol = 1e-6;
    bool eq_break = false;
    eq->add_option("--checkpoint", eq_ckpt, "checkpoint file")->required();
    eq->add_option("--data", eq_data, "scene file for the sweep")->required();
    eq->add_option("--out", eq_out, "stability curve CSV");
    eq->add_option("--tolerance", eq_tol, "per-mode deviation limit in meters")
        ->capture_default_str();
    eq->add_flag("--break-equivariance", eq_break,
                 "debug switch: drop the mean-centering in the equivariant init");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_generate(state, gen_out, gen_scenes, gen_seed);
        if (tr->parsed()) {
            return cmd_train(state, tr_data, tr_out, tr_resume, tr_epochs, tr_seed,
                             tr_ckpt_every);
        }
        if (ev->parsed()) return cmd_eval(state, ev_ckpt, ev_data, ev_out);
        if (eq->parsed()) {
            return cmd_equivariance(state, eq_ckpt, eq_data, eq_out, eq_tol, eq_break);
        }
    } catch (const validation_error& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const io_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    }
    return kExitOk;
}
