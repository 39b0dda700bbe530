#include "equiplan/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace equiplan {

namespace {

Vec2 heading_vec(double psi) { return {std::cos(psi), std::sin(psi)}; }

double polyline_length(const Polyline& p) {
    double total = 0.0;
    for (std::size_t i = 1; i < p.size(); ++i) total += norm(p[i] - p[i - 1]);
    return total;
}

}  // namespace

void Scene::validate() const {
    if (num_vehicles() < 2) {
        throw validation_error("scene requires at least 2 vehicles, got " +
                               std::to_string(num_vehicles()));
    }
    if (future.size() != past.size()) {
        throw validation_error("scene has " + std::to_string(past.size()) + " pasts but " +
                               std::to_string(future.size()) + " futures");
    }
    const std::size_t tp = t_past(), tf = t_future();
    if (tp < 2) throw validation_error("past length must be >= 2");
    for (std::size_t i = 0; i < past.size(); ++i) {
        if (past[i].size() != tp || future[i].size() != tf) {
            throw validation_error("vehicle " + std::to_string(i) +
                                   " has inconsistent trajectory length");
        }
    }
    if (ego_index != 0) throw validation_error("ego index must be 0");
    if (!(dt > 0.0)) throw validation_error("dt must be positive");
    if (route.size() < 2 || !(polyline_length(route) > 0.0)) {
        throw validation_error("route needs >= 2 distinct waypoints with positive arc length");
    }
}

Scene apply_se2(const Scene& scene, const Se2& g) {
    Scene out = scene;
    for (auto& traj : out.past)
        for (auto& p : traj) p = g.apply(p);
    for (auto& traj : out.future)
        for (auto& p : traj) p = g.apply(p);
    for (auto& p : out.route) p = g.apply(p);
    return out;
}

RouteEmbedding resample_route(const Polyline& polyline, std::size_t count) {
    if (count < 2) throw validation_error("route resampling needs count >= 2");
    if (polyline.size() < 2) throw validation_error("route polyline needs >= 2 points");

    std::vector<double> cum(polyline.size(), 0.0);
    for (std::size_t i = 1; i < polyline.size(); ++i) {
        cum[i] = cum[i - 1] + norm(polyline[i] - polyline[i - 1]);
    }
    const double total = cum.back();
    if (!(total > 0.0)) {
        throw validation_error("degenerate route polyline: all points identical");
    }

    Tensor pts(count, 2);
    pts.at(0, 0) = polyline.front().x;
    pts.at(0, 1) = polyline.front().y;
    pts.at(count - 1, 0) = polyline.back().x;
    pts.at(count - 1, 1) = polyline.back().y;

    std::size_t seg = 0;
    for (std::size_t i = 1; i + 1 < count; ++i) {
        const double s = total * static_cast<double>(i) / static_cast<double>(count - 1);
        while (seg + 2 < polyline.size() && cum[seg + 1] < s) ++seg;
        const double seg_len = cum[seg + 1] - cum[seg];
        const double alpha = seg_len > 0.0 ? (s - cum[seg]) / seg_len : 0.0;
        const Vec2 p = polyline[seg] + alpha * (polyline[seg + 1] - polyline[seg]);
        pts.at(i, 0) = p.x;
        pts.at(i, 1) = p.y;
    }
    return RouteEmbedding{std::move(pts)};
}

const char* to_string(ScenarioType s) {
    switch (s) {
        case ScenarioType::straight: return "straight";
        case ScenarioType::left_turn: return "left_turn";
        case ScenarioType::right_turn: return "right_turn";
        case ScenarioType::intersection_yield: return "intersection_yield";
    }
    return "?";
}

void GeneratorConfig::validate() const {
    std::vector<std::string> bad;
    if (!(speed_min >= 2.0 && speed_max <= 20.0 && speed_min <= speed_max))
        bad.push_back("speed_min/speed_max (must satisfy 2 <= min <= max <= 20)");
    if (!(m_min >= 2 && m_max <= 8 && m_min <= m_max))
        bad.push_back("m_min/m_max (must satisfy 2 <= min <= max <= 8)");
    if (!(radius_min >= 8.0 && radius_max <= 60.0 && radius_min <= radius_max))
        bad.push_back("radius_min/radius_max (must satisfy 8 <= min <= max <= 60)");
    if (!(noise_sigma >= 0.0)) bad.push_back("noise_sigma (must be >= 0)");
    if (!(dt > 0.0)) bad.push_back("dt (must be > 0)");
    if (t_p < 2) bad.push_back("t_p (must be >= 2)");
    if (t_f < 1) bad.push_back("t_f (must be >= 1)");
    if (!(world_extent >= 0.0)) bad.push_back("world_extent (must be >= 0)");
    const double wsum =
        weights.straight + weights.left_turn + weights.right_turn + weights.intersection_yield;
    if (weights.straight < 0 || weights.left_turn < 0 || weights.right_turn < 0 ||
        weights.intersection_yield < 0 || !(wsum > 0.0))
        bad.push_back("weights (must be non-negative with positive sum)");
    if (!bad.empty()) {
        std::string msg = "invalid generator config:";
        for (const auto& f : bad) msg += " " + f + ";";
        throw validation_error(msg);
    }
}

namespace {

ScenarioType draw_scenario(const ScenarioWeights& w, Rng& rng) {
    const double sum = w.straight + w.left_turn + w.right_turn + w.intersection_yield;
    const double u = rng.uniform() * sum;
    if (u < w.straight) return ScenarioType::straight;
    if (u < w.straight + w.left_turn) return ScenarioType::left_turn;
    if (u < w.straight + w.left_turn + w.right_turn) return ScenarioType::right_turn;
    return ScenarioType::intersection_yield;
}

// Position after arc length s starting at p0 with heading psi and constant
// curvature kappa (kappa = 0 degenerates to the straight line).
Vec2 along_path(Vec2 p0, double psi, double kappa, double s) {
    if (kappa == 0.0) return p0 + s * heading_vec(psi);
    const double r = 1.0 / kappa;
    return {p0.x + r * (std::sin(psi + kappa * s) - std::sin(psi)),
            p0.y - r * (std::cos(psi + kappa * s) - std::cos(psi))};
}

struct EgoPath {
    Vec2 start;
    double psi = 0.0;
    double turn_start = 0.0;  // arc length where curvature begins
    double kappa = 0.0;

    Vec2 at(double s) const {
        if (s <= turn_start || kappa == 0.0) return along_path(start, psi, 0.0, s);
        const Vec2 knee = along_path(start, psi, 0.0, turn_start);
        return along_path(knee, psi, kappa, s - turn_start);
    }
};

Scene build_scene(const GeneratorConfig& cfg, std::uint64_t seed, std::size_t index) {
    Rng rng = Rng::substream(seed, index);
    const ScenarioType scenario = draw_scenario(cfg.weights, rng);

    const Vec2 anchor{rng.uniform(-cfg.world_extent, cfg.world_extent),
                      rng.uniform(-cfg.world_extent, cfg.world_extent)};
    const double psi = rng.uniform(0.0, 2.0 * M_PI);
    const double cruise = rng.uniform(cfg.speed_min, cfg.speed_max);
    const auto m = static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(cfg.m_min), static_cast<std::int64_t>(cfg.m_max)));

    const std::size_t steps = cfg.t_p + cfg.t_f;
    const std::size_t now = cfg.t_p - 1;

    EgoPath path{anchor, psi, 0.0, 0.0};
    bool yields = false;
    double cross_speed = 0.0;
    double cross_offset = 0.0;  // SV arrival offset at the intersection, in steps
    switch (scenario) {
        case ScenarioType::straight:
            break;
        case ScenarioType::left_turn:
        case ScenarioType::right_turn: {
            const double radius = rng.uniform(cfg.radius_min, cfg.radius_max);
            path.turn_start = cruise * cfg.dt * static_cast<double>(now);
            path.kappa = (scenario == ScenarioType::left_turn ? 1.0 : -1.0) / radius;
            break;
        }
        case ScenarioType::intersection_yield:
            // the ego yields exactly when the crossing vehicle reaches the
            // intersection close to the ego's own arrival, so the decision is
            // predictable from the observed SV motion
            cross_speed = rng.uniform(cfg.speed_min, cfg.speed_max);
            cross_offset = rng.uniform(-1.6, 1.6);
            yields = std::abs(cross_offset) < 0.8;
            break;
    }

    // arc-length schedule; yields decelerate over the first future steps
    std::vector<double> arc(steps, 0.0);
    {
        double s = 0.0, v = cruise;
        const double v_slow = 0.35 * cruise;
        for (std::size_t k = 1; k < steps; ++k) {
            if (yields && k > now) v = std::max(v_slow, v - 0.25 * cruise);
            s += v * cfg.dt;
            arc[k] = s;
        }
    }

    Scene scene;
    scene.dt = cfg.dt;
    scene.past.resize(m);
    scene.future.resize(m);

    std::vector<std::vector<Vec2>> clean(m, std::vector<Vec2>(steps));
    for (std::size_t k = 0; k < steps; ++k) clean[0][k] = path.at(arc[k]);

    // route along the exact ego path, sampled every ~2 m, ending well past
    // the last reachable position (>= 30 m margin)
    {
        const double s_end = cruise * cfg.dt * static_cast<double>(steps - 1) + 35.0;
        Polyline route;
        for (double s = 0.0; s < s_end; s += 2.0) route.push_back(path.at(s));
        route.push_back(path.at(s_end));
        scene.route = std::move(route);
    }

    // surrounding vehicles: straight lanes around the ego; in yield scenes the
    // first SV crosses the ego path near the intersection point
    for (std::size_t i = 1; i < m; ++i) {
        double sv_psi;
        Vec2 sv_start;
        double sv_speed = rng.uniform(cfg.speed_min, cfg.speed_max);
        if (scenario == ScenarioType::intersection_yield && i == 1) {
            sv_speed = cross_speed;
            const double s_cross = cruise * cfg.dt * static_cast<double>(now + 2);
            const Vec2 crossing = path.at(s_cross);
            const double side = rng.uniform() < 0.5 ? 1.0 : -1.0;
            sv_psi = psi + side * M_PI / 2.0;
            const double tau_cross = cfg.dt * (static_cast<double>(now + 2) + cross_offset);
            sv_start = crossing - sv_speed * tau_cross * heading_vec(sv_psi);
        } else {
            const double lane = (rng.uniform() < 0.5 ? -1.0 : 1.0) *
                                std::floor(rng.uniform(1.0, 3.0)) * 3.5;
            const bool same_dir = rng.uniform() < 0.5;
            sv_psi = psi + (same_dir ? 0.0 : M_PI);
            const double ahead = rng.uniform(-20.0, 20.0);
            const Vec2 normal{-std::sin(psi), std::cos(psi)};
            sv_start = anchor + lane * normal + ahead * heading_vec(psi);
        }
        for (std::size_t k = 0; k < steps; ++k) {
            clean[i][k] = sv_start + sv_speed * cfg.dt * static_cast<double>(k) *
                                         heading_vec(sv_psi);
        }
    }

    // i.i.d. Gaussian noise on past observations only
    for (std::size_t i = 0; i < m; ++i) {
        scene.past[i].resize(cfg.t_p);
        scene.future[i].resize(cfg.t_f);
        for (std::size_t k = 0; k < cfg.t_p; ++k) {
            scene.past[i][k] = clean[i][k];
            if (cfg.noise_sigma > 0.0) {
                scene.past[i][k].x += rng.gaussian(0.0, cfg.noise_sigma);
                scene.past[i][k].y += rng.gaussian(0.0, cfg.noise_sigma);
            }
        }
        for (std::size_t k = 0; k < cfg.t_f; ++k) scene.future[i][k] = clean[i][cfg.t_p + k];
    }
    return scene;
}

}  // namespace

ScenarioType scenario_of(const GeneratorConfig& config, std::uint64_t seed, std::size_t index) {
    Rng rng = Rng::substream(seed, index);
    return draw_scenario(config.weights, rng);
}

Dataset generate_synthetic(const GeneratorConfig& config, std::uint64_t seed) {
    config.validate();
    Dataset ds;
    ds.seed = seed;
    ds.scenes.reserve(config.scenes);
    for (std::size_t i = 0; i < config.scenes; ++i) {
        ds.scenes.push_back(build_scene(config, seed, i));
        ds.scenes.back().validate();
    }
    return ds;
}

void save_scenes(const Dataset& dataset, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw io_error("cannot open for writing: " + path);
    for (const auto& scene : dataset.scenes) {
        nlohmann::ordered_json j;
        auto& vehicles = j["vehicles"] = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < scene.num_vehicles(); ++i) {
            nlohmann::ordered_json traj = nlohmann::ordered_json::array();
            for (const auto& p : scene.past[i]) traj.push_back({p.x, p.y});
            for (const auto& p : scene.future[i]) traj.push_back({p.x, p.y});
            vehicles.push_back(std::move(traj));
        }
        auto& route = j["route"] = nlohmann::ordered_json::array();
        for (const auto& p : scene.route) route.push_back({p.x, p.y});
        j["ego"] = scene.ego_index;
        j["dt"] = scene.dt;
        out << j.dump() << '\n';
    }
    if (!out) throw io_error("write failed: " + path);
}

namespace {

Vec2 parse_point(const nlohmann::json& j, std::size_t line_no, const char* field) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
        throw io_error("line " + std::to_string(line_no) + ": field '" + field +
                       "' must contain [x,y] number pairs");
    }
    return {j[0].get<double>(), j[1].get<double>()};
}

}  // namespace

Dataset load_scenes(const std::string& path, std::size_t t_p, std::size_t t_f) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open: " + path);
    Dataset ds;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw io_error("line " + std::to_string(line_no) + ": malformed JSON: " + e.what());
        }
        for (const char* field : {"vehicles", "route", "ego", "dt"}) {
            if (!j.contains(field)) {
                throw io_error("line " + std::to_string(line_no) + ": missing field '" + field +
                               "'");
            }
        }
        Scene scene;
        scene.dt = j["dt"].is_number() ? j["dt"].get<double>() : -1.0;
        if (!j["ego"].is_number_integer() || j["ego"].get<int>() != 0) {
            throw validation_error("line " + std::to_string(line_no) + ": field 'ego' must be 0");
        }
        if (!j["vehicles"].is_array() || j["vehicles"].empty()) {
            throw io_error("line " + std::to_string(line_no) +
                           ": field 'vehicles' must be a non-empty array");
        }
        const std::size_t expected = t_p + t_f;
        for (std::size_t i = 0; i < j["vehicles"].size(); ++i) {
            const auto& traj = j["vehicles"][i];
            if (!traj.is_array()) {
                throw io_error("line " + std::to_string(line_no) + ": vehicle " +
                               std::to_string(i) + " is not an array");
            }
            if (traj.size() != expected) {
                throw validation_error("line " + std::to_string(line_no) + ": vehicle " +
                                       std::to_string(i) + ": expected " +
                                       std::to_string(expected) + " points, got " +
                                       std::to_string(traj.size()));
            }
            std::vector<Vec2> pts;
            pts.reserve(expected);
            for (const auto& p : traj) pts.push_back(parse_point(p, line_no, "vehicles"));
            scene.past.emplace_back(pts.begin(), pts.begin() + static_cast<std::ptrdiff_t>(t_p));
            scene.future.emplace_back(pts.begin() + static_cast<std::ptrdiff_t>(t_p), pts.end());
        }
        for (const auto& p : j["route"]) scene.route.push_back(parse_point(p, line_no, "route"));
        scene.validate();
        ds.scenes.push_back(std::move(scene));
    }
    return ds;
}

}  // namespace equiplan
