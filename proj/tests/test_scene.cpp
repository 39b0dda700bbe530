#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "equiplan/scene.hpp"
#include "support.hpp"

using namespace equiplan;

namespace {

// Arc-length coordinate of a point lying on `poly`, scanning forward from
// segment `cursor`. Independent oracle for the resampling parameterization.
double arc_position_on(const Polyline& poly, Vec2 p, std::size_t& cursor) {
    double base = 0.0;
    for (std::size_t i = 0; i < cursor; ++i) base += norm(poly[i + 1] - poly[i]);
    for (std::size_t i = cursor; i + 1 < poly.size(); ++i) {
        const Vec2 seg = poly[i + 1] - poly[i];
        const double len = norm(seg);
        if (len > 0.0) {
            const double t = dot(p - poly[i], seg) / (len * len);
            if (t >= -1e-12 && t <= 1.0 + 1e-12) {
                const Vec2 proj = poly[i] + t * seg;
                if (norm(p - proj) < 1e-7) {
                    cursor = i;
                    return base + t * len;
                }
            }
        }
        base += len;
    }
    FAIL("resampled point does not lie on the source polyline");
    return 0.0;
}

bool scene_equal(const Scene& a, const Scene& b) {
    auto traj_eq = [](const std::vector<std::vector<Vec2>>& x,
                      const std::vector<std::vector<Vec2>>& y) {
        if (x.size() != y.size()) return false;
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (x[i].size() != y[i].size()) return false;
            for (std::size_t k = 0; k < x[i].size(); ++k) {
                if (x[i][k].x != y[i][k].x || x[i][k].y != y[i][k].y) return false;
            }
        }
        return true;
    };
    if (!traj_eq(a.past, b.past) || !traj_eq(a.future, b.future)) return false;
    if (a.route.size() != b.route.size()) return false;
    for (std::size_t i = 0; i < a.route.size(); ++i) {
        if (a.route[i].x != b.route[i].x || a.route[i].y != b.route[i].y) return false;
    }
    return a.ego_index == b.ego_index && a.dt == b.dt;
}

std::filesystem::path temp_file(const char* tag) {
    return std::filesystem::temp_directory_path() /
           (std::string("equiplan_test_") + tag + "_" + std::to_string(::getpid()) + ".jsonl");
}

}  // namespace

TEST_CASE("resample_route uniform segment") {
    const auto r = resample_route({{0, 0}, {3, 0}}, 4);
    REQUIRE(r.points.rows == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(r.points.at(i, 0) == doctest::Approx(double(i)).epsilon(1e-14));
        CHECK(r.points.at(i, 1) == 0.0);
    }
}

TEST_CASE("resample_route hits the corner of a right angle") {
    const auto r = resample_route({{0, 0}, {1, 0}, {1, 1}}, 3);
    CHECK(r.points.at(0, 0) == 0.0);
    CHECK(r.points.at(1, 0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(r.points.at(1, 1) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK(r.points.at(2, 0) == 1.0);
    CHECK(r.points.at(2, 1) == 1.0);
}

TEST_CASE("resample_route spacing is uniform in arc length") {
    Rng rng(101);
    Polyline poly{{0, 0}};
    for (int i = 0; i < 9; ++i) {
        poly.push_back(poly.back() + Vec2{rng.uniform(0.5, 5.0), rng.uniform(-3.0, 3.0)});
    }
    const std::size_t c = 64;
    const auto r = resample_route(poly, c);

    CHECK(r.points.at(0, 0) == poly.front().x);
    CHECK(std::abs(r.points.at(c - 1, 0) - poly.back().x) < 1e-9);
    CHECK(std::abs(r.points.at(c - 1, 1) - poly.back().y) < 1e-9);

    std::size_t cursor = 0;
    std::vector<double> s(c);
    for (std::size_t i = 0; i < c; ++i) {
        s[i] = arc_position_on(poly, {r.points.at(i, 0), r.points.at(i, 1)}, cursor);
    }
    const double expected = s[1] - s[0];
    for (std::size_t i = 1; i < c; ++i) {
        CHECK(std::abs((s[i] - s[i - 1]) - expected) < 1e-9);
    }
}

TEST_CASE("resample_route rejects degenerate polylines") {
    CHECK_THROWS_AS(resample_route({{2, 2}, {2, 2}, {2, 2}}, 4), validation_error);
}

TEST_CASE("apply_se2 identity, half turn, inverse round-trip") {
    GeneratorConfig cfg;
    cfg.scenes = 1;
    cfg.noise_sigma = 0.0;
    Dataset ds = generate_synthetic(cfg, 3);
    const Scene& s = ds.scenes[0];

    CHECK(scene_equal(apply_se2(s, Se2{0.0, {0, 0}}), s));

    const Se2 half{M_PI, {0, 0}};
    const Vec2 p = half.apply({1, 2});
    CHECK(p.x == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(p.y == doctest::Approx(-2.0).epsilon(1e-12));

    Rng rng(102);
    for (int rep = 0; rep < 50; ++rep) {
        const Se2 g{rng.uniform(0, 2 * M_PI), {rng.uniform(-100, 100), rng.uniform(-100, 100)}};
        const Scene round = apply_se2(apply_se2(s, g), g.inverse());
        for (std::size_t i = 0; i < s.num_vehicles(); ++i) {
            for (std::size_t k = 0; k < s.t_past(); ++k) {
                CHECK(std::abs(round.past[i][k].x - s.past[i][k].x) < 1e-12);
                CHECK(std::abs(round.past[i][k].y - s.past[i][k].y) < 1e-12);
            }
        }
    }
}

TEST_CASE("apply_se2 is an isometry") {
    GeneratorConfig cfg;
    cfg.scenes = 2;
    Dataset ds = generate_synthetic(cfg, 11);
    Rng rng(103);
    for (const auto& s : ds.scenes) {
        const Se2 g{rng.uniform(0, 2 * M_PI), {rng.uniform(-100, 100), rng.uniform(-100, 100)}};
        const Scene ts = apply_se2(s, g);
        for (std::size_t i = 0; i < s.num_vehicles(); ++i) {
            for (std::size_t j = 0; j < s.num_vehicles(); ++j) {
                const double d0 = norm(s.past[i][0] - s.past[j][s.t_past() - 1]);
                const double d1 = norm(ts.past[i][0] - ts.past[j][s.t_past() - 1]);
                CHECK(std::abs(d0 - d1) < 1e-12);
            }
        }
    }
}

TEST_CASE("resample_route commutes with apply_se2") {
    Rng rng(104);
    Polyline poly{{0, 0}};
    for (int i = 0; i < 7; ++i) {
        poly.push_back(poly.back() + Vec2{rng.uniform(0.2, 4.0), rng.uniform(-2.0, 2.0)});
    }
    const Se2 g{rng.uniform(0, 2 * M_PI), {rng.uniform(-50, 50), rng.uniform(-50, 50)}};

    Polyline transformed = poly;
    for (auto& p : transformed) p = g.apply(p);

    const Tensor a = resample_route(transformed, 32).points;
    Tensor b = resample_route(poly, 32).points;
    for (std::size_t r = 0; r < b.rows; ++r) {
        const Vec2 q = g.apply({b.at(r, 0), b.at(r, 1)});
        b.at(r, 0) = q.x;
        b.at(r, 1) = q.y;
    }
    CHECK(testsupport::max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("generator is deterministic for a fixed seed") {
    GeneratorConfig cfg;
    cfg.scenes = 20;
    const Dataset a = generate_synthetic(cfg, 7);
    const Dataset b = generate_synthetic(cfg, 7);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(scene_equal(a.scenes[i], b.scenes[i]));
}

TEST_CASE("straight scenario with zero noise moves the ego at constant spacing") {
    GeneratorConfig cfg;
    cfg.scenes = 5;
    cfg.noise_sigma = 0.0;
    cfg.weights = {1.0, 0.0, 0.0, 0.0};
    const Dataset ds = generate_synthetic(cfg, 21);
    for (const auto& s : ds.scenes) {
        std::vector<Vec2> ego = s.past[0];
        ego.insert(ego.end(), s.future[0].begin(), s.future[0].end());
        const double step0 = norm(ego[1] - ego[0]);
        CHECK(step0 > 0.0);
        for (std::size_t k = 1; k + 1 < ego.size(); ++k) {
            CHECK(std::abs(norm(ego[k + 1] - ego[k]) - step0) < 1e-9);
        }
        // spacing equals speed * dt with speed inside configured bounds
        CHECK(step0 >= cfg.speed_min * cfg.dt - 1e-9);
        CHECK(step0 <= cfg.speed_max * cfg.dt + 1e-9);
    }
}

TEST_CASE("scenario frequencies stay within 5% of configured weights") {
    GeneratorConfig cfg;
    cfg.scenes = 1000;
    std::array<std::size_t, 4> counts{};
    for (std::size_t i = 0; i < cfg.scenes; ++i) {
        counts[static_cast<std::size_t>(scenario_of(cfg, 77, i))]++;
    }
    for (std::size_t c = 0; c < 4; ++c) {
        const double freq = static_cast<double>(counts[c]) / static_cast<double>(cfg.scenes);
        CHECK(std::abs(freq - 0.25) < 0.05);
    }
}

TEST_CASE("generator output is finite with bounded speeds") {
    GeneratorConfig cfg;
    cfg.scenes = 50;
    cfg.noise_sigma = 0.0;
    const Dataset ds = generate_synthetic(cfg, 5);
    for (const auto& s : ds.scenes) {
        for (std::size_t i = 0; i < s.num_vehicles(); ++i) {
            std::vector<Vec2> all = s.past[i];
            all.insert(all.end(), s.future[i].begin(), s.future[i].end());
            for (std::size_t k = 0; k < all.size(); ++k) {
                CHECK(std::isfinite(all[k].x));
                CHECK(std::isfinite(all[k].y));
                if (k > 0) {
                    const double v = norm(all[k] - all[k - 1]) / s.dt;
                    CHECK(v >= 0.0);
                    CHECK(v <= cfg.speed_max + 1e-9);
                }
            }
        }
    }
}

TEST_CASE("invalid generator config lists the offending fields") {
    GeneratorConfig cfg;
    cfg.speed_min = 1.0;   // below the allowed range
    cfg.noise_sigma = -1;  // negative
    try {
        generate_synthetic(cfg, 1);
        FAIL("expected validation_error");
    } catch (const validation_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("speed_min") != std::string::npos);
        CHECK(msg.find("noise_sigma") != std::string::npos);
    }
}

TEST_CASE("empty scene file loads as an empty dataset") {
    const auto path = temp_file("empty");
    std::ofstream(path.string()).close();
    const Dataset ds = load_scenes(path.string());
    CHECK(ds.empty());
    std::filesystem::remove(path);
}

TEST_CASE("save then load round-trips scenes exactly") {
    GeneratorConfig cfg;
    cfg.scenes = 4;
    const Dataset ds = generate_synthetic(cfg, 99);
    const auto path = temp_file("roundtrip");
    save_scenes(ds, path.string());
    const Dataset back = load_scenes(path.string(), cfg.t_p, cfg.t_f);
    REQUIRE(back.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) CHECK(scene_equal(ds.scenes[i], back.scenes[i]));

    // saving twice produces byte-identical files
    const auto path2 = temp_file("roundtrip2");
    save_scenes(back, path2.string());
    std::ifstream f1(path.string()), f2(path2.string());
    std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
    std::filesystem::remove(path);
    std::filesystem::remove(path2);
}

TEST_CASE("loader rejects trajectories with the wrong point count") {
    const auto path = temp_file("badlen");
    {
        std::ofstream out(path.string());
        out << R"({"vehicles": [[[0,0],[1,0],[2,0],[3,0],[4,0],[5,0],[6,0],[7,0],[8,0]],)"
            << R"([[0,1],[1,1],[2,1],[3,1],[4,1],[5,1],[6,1],[7,1],[8,1]]],)"
            << R"("route": [[0,0],[50,0]], "ego": 0, "dt": 0.5})" << '\n';
    }
    try {
        load_scenes(path.string(), 4, 6);
        FAIL("expected validation_error");
    } catch (const validation_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("expected 10 points, got 9") != std::string::npos);
        CHECK(msg.find("line 1") != std::string::npos);
    }
    std::filesystem::remove(path);
}

TEST_CASE("loader reports malformed lines with their number") {
    const auto path = temp_file("malformed");
    {
        std::ofstream out(path.string());
        GeneratorConfig cfg;
        cfg.scenes = 1;
        save_scenes(generate_synthetic(cfg, 1), path.string());
        std::ofstream app(path.string(), std::ios::app);
        app << "{not json\n";
    }
    try {
        load_scenes(path.string(), 4, 6);
        FAIL("expected io_error");
    } catch (const io_error& e) {
        CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
    std::filesystem::remove(path);
}
