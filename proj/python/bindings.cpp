// Python bindings for the core operations: scene generation and I/O, the
// SE(2) group action, forward features, planning, training, evaluation and
// the rotation-sweep stability check.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "equiplan/config.hpp"
#include "equiplan/eval.hpp"
#include "equiplan/training.hpp"

namespace py = pybind11;
using namespace equiplan;

namespace {

py::array_t<double> tensor_to_array(const Tensor& t) {
    py::array_t<double> out({t.rows, t.cols});
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

Tensor array_to_tensor(const py::array_t<double>& a) {
    const auto buf = a.request();
    if (buf.ndim != 2) throw validation_error("expected a 2-d array");
    Tensor t(static_cast<std::size_t>(buf.shape[0]), static_cast<std::size_t>(buf.shape[1]));
    const auto view = a.unchecked<2>();
    for (std::size_t r = 0; r < t.rows; ++r) {
        for (std::size_t c = 0; c < t.cols; ++c) {
            t.at(r, c) = view(static_cast<py::ssize_t>(r), static_cast<py::ssize_t>(c));
        }
    }
    return t;
}

py::array_t<double> points_to_array(const std::vector<Vec2>& pts) {
    py::array_t<double> out({pts.size(), static_cast<std::size_t>(2)});
    auto view = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        view(static_cast<py::ssize_t>(i), 0) = pts[i].x;
        view(static_cast<py::ssize_t>(i), 1) = pts[i].y;
    }
    return out;
}

std::vector<Vec2> array_to_points(const py::array_t<double>& a) {
    const auto buf = a.request();
    if (buf.ndim != 2 || buf.shape[1] != 2) throw validation_error("expected an (n, 2) array");
    std::vector<Vec2> pts(static_cast<std::size_t>(buf.shape[0]));
    const auto view = a.unchecked<2>();
    for (std::size_t i = 0; i < pts.size(); ++i) {
        pts[i] = {view(static_cast<py::ssize_t>(i), 0), view(static_cast<py::ssize_t>(i), 1)};
    }
    return pts;
}

py::array_t<double> stack_states(const std::vector<Tensor>& ts) {
    if (ts.empty()) return py::array_t<double>();
    py::array_t<double> out({ts.size(), ts[0].rows, ts[0].cols});
    double* dst = out.mutable_data();
    for (const auto& t : ts) {
        std::copy(t.data.begin(), t.data.end(), dst);
        dst += t.numel();
    }
    return out;
}

py::array_t<double> modes_to_array(const ModeSet& modes) {
    py::array_t<double> out(
        {modes.modes, modes.vehicles, modes.t_f + 1, static_cast<std::size_t>(2)});
    double* dst = out.mutable_data();
    for (const auto& traj : modes.traj) {
        std::copy(traj.data.begin(), traj.data.end(), dst);
        dst += traj.numel();
    }
    return out;
}

py::dict report_to_dict(const SceneMetrics& m) {
    py::dict d;
    d["l2_3s"] = m.l2_3s;
    d["l2_avg"] = m.l2_avg;
    d["cr_3s"] = m.cr_3s;
    d["cr_avg"] = m.cr_avg;
    d["minl2_avg"] = m.minl2_avg;
    d["minl2_3s"] = m.minl2_3s;
    d["selection_error"] = m.selection_error;
    return d;
}

}  // namespace

PYBIND11_MODULE(_equiplan, m) {
    m.doc() = "SE(2)-equivariant joint prediction and planning";

    py::register_exception<validation_error>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<io_error>(m, "IoError", PyExc_IOError);
    py::register_exception<numeric_error>(m, "NumericError", PyExc_ArithmeticError);

    py::class_<Scene>(m, "Scene")
        .def(py::init<>())
        .def_readwrite("dt", &Scene::dt)
        .def_readonly("ego_index", &Scene::ego_index)
        .def_property_readonly("num_vehicles", &Scene::num_vehicles)
        .def("past", [](const Scene& s, std::size_t i) { return points_to_array(s.past.at(i)); })
        .def("future",
             [](const Scene& s, std::size_t i) { return points_to_array(s.future.at(i)); })
        .def_property_readonly("route", [](const Scene& s) { return points_to_array(s.route); });

    py::class_<Dataset>(m, "Dataset")
        .def(py::init<>())
        .def_readonly("scenes", &Dataset::scenes)
        .def_readonly("seed", &Dataset::seed)
        .def("__len__", &Dataset::size);

    py::class_<ScenarioWeights>(m, "ScenarioWeights")
        .def(py::init<>())
        .def_readwrite("straight", &ScenarioWeights::straight)
        .def_readwrite("left_turn", &ScenarioWeights::left_turn)
        .def_readwrite("right_turn", &ScenarioWeights::right_turn)
        .def_readwrite("intersection_yield", &ScenarioWeights::intersection_yield);

    py::class_<GeneratorConfig>(m, "GeneratorConfig")
        .def(py::init<>())
        .def_readwrite("scenes", &GeneratorConfig::scenes)
        .def_readwrite("t_p", &GeneratorConfig::t_p)
        .def_readwrite("t_f", &GeneratorConfig::t_f)
        .def_readwrite("dt", &GeneratorConfig::dt)
        .def_readwrite("m_min", &GeneratorConfig::m_min)
        .def_readwrite("m_max", &GeneratorConfig::m_max)
        .def_readwrite("speed_min", &GeneratorConfig::speed_min)
        .def_readwrite("speed_max", &GeneratorConfig::speed_max)
        .def_readwrite("radius_min", &GeneratorConfig::radius_min)
        .def_readwrite("radius_max", &GeneratorConfig::radius_max)
        .def_readwrite("noise_sigma", &GeneratorConfig::noise_sigma)
        .def_readwrite("world_extent", &GeneratorConfig::world_extent)
        .def_readwrite("weights", &GeneratorConfig::weights);

    m.def("generate_synthetic", &generate_synthetic, py::arg("config"), py::arg("seed"));
    m.def("load_scenes", &load_scenes, py::arg("path"), py::arg("t_p") = 4, py::arg("t_f") = 6);
    m.def("save_scenes", &save_scenes, py::arg("dataset"), py::arg("path"));
    m.def(
        "apply_se2",
        [](const Scene& s, double theta, double tx, double ty) {
            return apply_se2(s, Se2{theta, {tx, ty}});
        },
        py::arg("scene"), py::arg("theta"), py::arg("tx") = 0.0, py::arg("ty") = 0.0);
    m.def(
        "resample_route",
        [](const py::array_t<double>& polyline, std::size_t count) {
            return tensor_to_array(resample_route(array_to_points(polyline), count).points);
        },
        py::arg("polyline"), py::arg("count"));

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("channels", &ModelConfig::channels)
        .def_readwrite("hidden", &ModelConfig::hidden)
        .def_readwrite("relations", &ModelConfig::relations)
        .def_readwrite("modes", &ModelConfig::modes)
        .def_readwrite("blocks", &ModelConfig::blocks)
        .def_readwrite("t_p", &ModelConfig::t_p)
        .def_readwrite("t_f", &ModelConfig::t_f);

    py::class_<AblationFlags>(m, "AblationFlags")
        .def(py::init<>())
        .def_readwrite("prediction_loss", &AblationFlags::prediction_loss)
        .def_readwrite("route_attraction", &AblationFlags::route_attraction)
        .def_readwrite("equivariant_init", &AblationFlags::equivariant_init);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("lr0", &TrainConfig::lr0)
        .def_readwrite("lr_decay", &TrainConfig::lr_decay)
        .def_readwrite("lr_decay_every", &TrainConfig::lr_decay_every)
        .def_readwrite("alpha", &TrainConfig::alpha)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("threads", &TrainConfig::threads)
        .def_readwrite("ablation", &TrainConfig::ablation);

    py::class_<ModelParams>(m, "ModelParams")
        .def_static("create", &ModelParams::create, py::arg("config"), py::arg("seed"))
        .def_property_readonly("config", [](const ModelParams& p) { return p.cfg; })
        .def("param_count", &ModelParams::param_count);

    m.def(
        "forward",
        [](const Scene& scene, const ModelParams& params, bool route_attraction,
           bool equivariant_init) {
            const auto [g, h] = forward(scene, params, {route_attraction, equivariant_init});
            return py::make_tuple(stack_states(g.g), stack_states(h.h));
        },
        py::arg("scene"), py::arg("params"), py::arg("route_attraction") = true,
        py::arg("equivariant_init") = true);

    m.def(
        "plan",
        [](const Scene& scene, const ModelParams& params, bool route_attraction,
           bool equivariant_init, const std::string& score_mode) {
            const PlanResult res =
                plan_scene(scene, params, {route_attraction, equivariant_init},
                           score_mode_from_string(score_mode));
            py::dict out;
            out["trajectory"] = tensor_to_array(res.plan.trajectory);
            out["mode_index"] = res.plan.mode_index;
            out["scores"] = res.plan.scores;
            out["modes"] = modes_to_array(res.modes);
            return out;
        },
        py::arg("scene"), py::arg("params"), py::arg("route_attraction") = true,
        py::arg("equivariant_init") = true, py::arg("score_mode") = "paper");

    m.def(
        "train",
        [](const Dataset& data, const ModelConfig& model_cfg, const TrainConfig& cfg) {
            const TrainResult res = train(data, model_cfg, cfg);
            py::list history;
            for (const auto& r : res.history) {
                py::dict row;
                row["epoch"] = r.epoch;
                row["lr"] = r.lr;
                row["loss"] = r.loss;
                row["loss_plan"] = r.loss_plan;
                row["loss_wta"] = r.loss_wta;
                row["loss_pred"] = r.loss_pred;
                row["selection_accuracy"] = r.selection_accuracy;
                history.append(row);
            }
            return py::make_tuple(res.params, history);
        },
        py::arg("dataset"), py::arg("model_config"), py::arg("train_config"));

    m.def(
        "evaluate",
        [](const Dataset& data, const ModelParams& params, double r_coll, bool route_attraction,
           bool equivariant_init, const std::string& score_mode) {
            EvalConfig cfg;
            cfg.r_coll = r_coll;
            const EvalReport rep = evaluate(data, params, cfg,
                                            {route_attraction, equivariant_init},
                                            score_mode_from_string(score_mode));
            py::dict out = report_to_dict(rep.aggregate);
            py::list rows;
            for (const auto& r : rep.rows) rows.append(report_to_dict(r));
            out["rows"] = rows;
            return out;
        },
        py::arg("dataset"), py::arg("params"), py::arg("r_coll") = 1.0,
        py::arg("route_attraction") = true, py::arg("equivariant_init") = true,
        py::arg("score_mode") = "paper");

    m.def(
        "equivariance_sweep",
        [](const Scene& scene, const ModelParams& params, std::size_t theta_min,
           std::size_t theta_max, bool equivariant_init) {
            EvalConfig cfg;
            cfg.theta_min = theta_min;
            cfg.theta_max = theta_max;
            ForwardOptions options;
            options.equivariant_init = equivariant_init;
            const StabilityCurve curve = equivariance_sweep(scene, params, cfg, options);
            py::array_t<double> out(
                {curve.theta_deg.size(), static_cast<std::size_t>(5)});
            auto view = out.mutable_unchecked<2>();
            for (std::size_t i = 0; i < curve.theta_deg.size(); ++i) {
                const auto r = static_cast<py::ssize_t>(i);
                view(r, 0) = static_cast<double>(curve.theta_deg[i]);
                view(r, 1) = curve.mode_dev_rot[i];
                view(r, 2) = curve.plan_dev_rot[i];
                view(r, 3) = curve.mode_dev_rt[i];
                view(r, 4) = curve.plan_dev_rt[i];
            }
            return out;
        },
        py::arg("scene"), py::arg("params"), py::arg("theta_min") = 1,
        py::arg("theta_max") = 359, py::arg("equivariant_init") = true);

    m.def(
        "baseline_constant_velocity",
        [](const Scene& scene) { return tensor_to_array(baseline_constant_velocity(scene)); },
        py::arg("scene"));

    m.def(
        "save_checkpoint",
        [](const ModelParams& params, const std::string& path) {
            save_checkpoint({params.cfg, TrainConfig{}, 0, params, OptimizerState{}}, path);
        },
        py::arg("params"), py::arg("path"));
    m.def(
        "load_checkpoint",
        [](const std::string& path) { return load_checkpoint(path).params; },
        py::arg("path"));
}
