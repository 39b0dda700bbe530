#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "equiplan/errors.hpp"
#include "equiplan/rng.hpp"
#include "equiplan/tensor.hpp"

namespace equiplan {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
inline Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
inline double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }
inline double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
inline double norm(Vec2 a) { return std::sqrt(dot(a, a)); }

// Planar roto-translation acting on row vectors: p -> p R(theta) + t.
struct Se2 {
    double theta = 0.0;
    Vec2 t;

    Vec2 apply(Vec2 p) const {
        const double c = std::cos(theta), s = std::sin(theta);
        return {p.x * c - p.y * s + t.x, p.x * s + p.y * c + t.y};
    }
    Se2 inverse() const {
        const double c = std::cos(theta), s = std::sin(theta);
        // p R + t = q  =>  p = (q - t) R^-1 = q R(-theta) - t R(-theta)
        return Se2{-theta, {-(t.x * c + t.y * s), -(-t.x * s + t.y * c)}};
    }
};

using Polyline = std::vector<Vec2>;

// One traffic scene: M vehicles with observed pasts and ground-truth futures,
// plus the ego route polyline. Vehicle 0 is the ego. Units are meters.
struct Scene {
    std::vector<std::vector<Vec2>> past;    // M x T_p
    std::vector<std::vector<Vec2>> future;  // M x T_f
    Polyline route;
    std::size_t ego_index = 0;
    double dt = 0.5;

    std::size_t num_vehicles() const { return past.size(); }
    std::size_t t_past() const { return past.empty() ? 0 : past[0].size(); }
    std::size_t t_future() const { return future.empty() ? 0 : future[0].size(); }

    void validate() const;  // throws validation_error
};

Scene apply_se2(const Scene& scene, const Se2& g);

// Route resampled to exactly C points equally spaced in arc length.
struct RouteEmbedding {
    Tensor points;  // C x 2
};

RouteEmbedding resample_route(const Polyline& polyline, std::size_t count);

enum class ScenarioType : std::uint8_t { straight, left_turn, right_turn, intersection_yield };

const char* to_string(ScenarioType s);

struct ScenarioWeights {
    double straight = 0.25;
    double left_turn = 0.25;
    double right_turn = 0.25;
    double intersection_yield = 0.25;
};

struct GeneratorConfig {
    std::size_t scenes = 100;
    std::size_t t_p = 4;
    std::size_t t_f = 6;
    double dt = 0.5;
    std::size_t m_min = 2;
    std::size_t m_max = 8;
    double speed_min = 2.0;
    double speed_max = 20.0;
    double radius_min = 8.0;
    double radius_max = 60.0;
    double noise_sigma = 0.05;
    double world_extent = 200.0;  // scene anchor drawn in [-extent, extent]^2
    ScenarioWeights weights;

    void validate() const;  // throws validation_error listing offending fields
};

struct Dataset {
    std::vector<Scene> scenes;
    std::string split = "train";
    std::uint64_t seed = 0;

    bool empty() const { return scenes.empty(); }
    std::size_t size() const { return scenes.size(); }
};

// Deterministic synthetic traffic. Each scene draws a scenario type; the ego
// follows its route, surrounding vehicles follow straight or arc lanes.
// Gaussian position noise is added to past observations only.
Dataset generate_synthetic(const GeneratorConfig& config, std::uint64_t seed);

// Scenario drawn for generated scene `index` (exposed for distribution tests).
ScenarioType scenario_of(const GeneratorConfig& config, std::uint64_t seed, std::size_t index);

// Line-delimited JSON scene files, one scene per line.
Dataset load_scenes(const std::string& path, std::size_t t_p = 4, std::size_t t_f = 6);
void save_scenes(const Dataset& dataset, const std::string& path);

}  // namespace equiplan
