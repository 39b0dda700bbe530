#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "equiplan/eval.hpp"
#include "support.hpp"

using namespace equiplan;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.channels = 8;
    cfg.hidden = 8;
    cfg.relations = 2;
    cfg.modes = 3;
    cfg.blocks = 2;
    return cfg;
}

Dataset tiny_dataset(std::size_t scenes, std::uint64_t seed) {
    GeneratorConfig gc;
    gc.scenes = scenes;
    gc.world_extent = 50.0;
    gc.m_min = 2;
    gc.m_max = 4;
    return generate_synthetic(gc, seed);
}

}  // namespace

TEST_CASE("l2 metrics on exact, offset and growing errors") {
    Tensor gt(6, 2);
    for (std::size_t k = 0; k < 6; ++k) gt.at(k, 0) = static_cast<double>(k);

    CHECK(l2_metrics(gt, gt) == std::pair{0.0, 0.0});

    Tensor offset = gt;
    for (std::size_t k = 0; k < 6; ++k) offset.at(k, 1) += 2.0;
    CHECK(l2_metrics(offset, gt).first == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(l2_metrics(offset, gt).second == doctest::Approx(2.0).epsilon(1e-15));

    // linearly growing offset 0.5 * t over steps t = 1..6
    Tensor growing = gt;
    for (std::size_t k = 0; k < 6; ++k) growing.at(k, 1) += 0.5 * static_cast<double>(k + 1);
    const auto [l3s, lavg] = l2_metrics(growing, gt);
    CHECK(l3s == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(lavg == doctest::Approx(1.75).epsilon(1e-15));

    // symmetry
    CHECK(l2_metrics(growing, gt) == l2_metrics(gt, growing));
}

TEST_CASE("collision rate on far and touching scenes") {
    Tensor plan(6, 2);
    for (std::size_t k = 0; k < 6; ++k) plan.at(k, 0) = static_cast<double>(k);

    Tensor far(6, 2);
    for (std::size_t k = 0; k < 6; ++k) {
        far.at(k, 0) = static_cast<double>(k);
        far.at(k, 1) = 20.0;
    }
    CHECK(collision_rate(plan, {far}, 1.0) == std::pair{0.0, 0.0});

    // SV meets the plan exactly at the final step only
    Tensor touch = far;
    touch.at(5, 1) = 0.0;
    const auto [cr3s, cravg] = collision_rate(plan, {touch}, 1.0);
    CHECK(cr3s == 1.0);
    CHECK(cravg == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("collision rate agrees with a brute-force scan and grows with r_coll") {
    Rng rng(601);
    for (int rep = 0; rep < 40; ++rep) {
        Tensor plan = testsupport::random_tensor(6, 2, rng, -10, 10);
        std::vector<Tensor> svs;
        for (int i = 0; i < 3; ++i) svs.push_back(testsupport::random_tensor(6, 2, rng, -10, 10));
        const double r = rng.uniform(0.5, 4.0);

        std::size_t hits = 0;
        bool final_hit = false;
        for (std::size_t k = 0; k < 6; ++k) {
            bool any = false;
            for (const auto& sv : svs) {
                const double d = std::hypot(plan.at(k, 0) - sv.at(k, 0),
                                            plan.at(k, 1) - sv.at(k, 1));
                if (d < 2.0 * r) any = true;
            }
            if (any) {
                ++hits;
                if (k == 5) final_hit = true;
            }
        }
        const auto [cr3s, cravg] = collision_rate(plan, svs, r);
        CHECK(cr3s == (final_hit ? 1.0 : 0.0));
        CHECK(cravg == static_cast<double>(hits) / 6.0);

        // monotone non-decreasing in the collision radius
        CHECK(collision_rate(plan, svs, r + 1.0).second >= cravg);
    }
}

TEST_CASE("constant-velocity baseline") {
    SUBCASE("stationary ego stays put") {
        Scene s = tiny_dataset(1, 81).scenes[0];
        for (auto& p : s.past[0]) p = {3.0, 4.0};
        const Tensor plan = baseline_constant_velocity(s);
        for (std::size_t k = 0; k < plan.rows; ++k) {
            CHECK(plan.at(k, 0) == 3.0);
            CHECK(plan.at(k, 1) == 4.0);
        }
    }
    SUBCASE("constant-velocity ground truth gives zero error") {
        GeneratorConfig gc;
        gc.scenes = 3;
        gc.noise_sigma = 0.0;
        gc.weights = {1.0, 0.0, 0.0, 0.0};
        for (const auto& s : generate_synthetic(gc, 83).scenes) {
            const auto [l3s, lavg] = l2_metrics(baseline_constant_velocity(s), ego_future(s));
            CHECK(l3s < 1e-9);
            CHECK(lavg < 1e-9);
        }
    }
    SUBCASE("turning scenarios defeat the extrapolation") {
        GeneratorConfig gc;
        gc.scenes = 5;
        gc.noise_sigma = 0.0;
        gc.weights = {0.0, 0.5, 0.5, 0.0};
        for (const auto& s : generate_synthetic(gc, 85).scenes) {
            CHECK(l2_metrics(baseline_constant_velocity(s), ego_future(s)).first > 0.05);
        }
    }
}

TEST_CASE("evaluate aggregates equal the mean of per-scene rows") {
    const auto params = ModelParams::create(tiny_config(), 87);
    const Dataset data = tiny_dataset(12, 87);
    EvalConfig ec;
    const EvalReport rep = evaluate(data, params, ec);
    REQUIRE(rep.rows.size() == 12);

    auto mean_of = [&](auto field) {
        double acc = 0.0;
        for (const auto& r : rep.rows) acc += field(r);
        return acc / static_cast<double>(rep.rows.size());
    };
    CHECK(std::abs(rep.aggregate.l2_3s - mean_of([](auto& r) { return r.l2_3s; })) < 1e-12);
    CHECK(std::abs(rep.aggregate.l2_avg - mean_of([](auto& r) { return r.l2_avg; })) < 1e-12);
    CHECK(std::abs(rep.aggregate.cr_avg - mean_of([](auto& r) { return r.cr_avg; })) < 1e-12);
    CHECK(std::abs(rep.aggregate.minl2_3s - mean_of([](auto& r) { return r.minl2_3s; })) <
          1e-12);
}

TEST_CASE("evaluating an empty dataset is an error") {
    const auto params = ModelParams::create(tiny_config(), 89);
    CHECK_THROWS_AS(evaluate(Dataset{}, params, EvalConfig{}), validation_error);
}

TEST_CASE("report CSV carries per-scene rows plus one aggregate record") {
    const auto params = ModelParams::create(tiny_config(), 91);
    const Dataset data = tiny_dataset(5, 91);
    const EvalReport rep = evaluate(data, params, EvalConfig{});
    const auto path = (std::filesystem::temp_directory_path() / "equiplan_report.csv").string();
    write_report_csv(rep, path);
    std::ifstream in(path);
    std::string line;
    std::size_t lines = 0;
    std::string last;
    while (std::getline(in, line)) {
        if (!line.empty()) last = line;
        ++lines;
    }
    CHECK(lines == 1 + 5 + 1);  // header + rows + aggregate
    CHECK(last.rfind("aggregate,", 0) == 0);
    std::filesystem::remove(path);
}

TEST_CASE("equivariance sweep stays below 1e-6 m for random weights") {
    const auto params = ModelParams::create(tiny_config(), 93);
    const Scene s = tiny_dataset(1, 93).scenes[0];
    EvalConfig ec;
    ec.theta_min = 1;
    ec.theta_max = 45;  // unit-test slice; the acceptance suite runs all 359
    const StabilityCurve curve = equivariance_sweep(s, params, ec);
    REQUIRE(curve.theta_deg.size() == 45);
    CHECK(curve.max_mode_dev() < 1e-6);
    CHECK(translation_deviation(s, params, ec) < 1e-6);
}

TEST_CASE("identity transforms give exactly zero deviation") {
    const auto params = ModelParams::create(tiny_config(), 95);
    const Scene s = tiny_dataset(1, 95).scenes[0];
    EvalConfig ec;
    ec.translations = 5;
    ec.translation_extent = 0.0;  // all sampled translations are the identity
    CHECK(translation_deviation(s, params, ec) == 0.0);
}

TEST_CASE("the broken-equivariance variant fails the sweep loudly") {
    const auto params = ModelParams::create(tiny_config(), 97);
    const Scene s = tiny_dataset(1, 97).scenes[0];
    EvalConfig ec;
    ec.theta_min = 1;
    ec.theta_max = 24;
    ForwardOptions broken;
    broken.equivariant_init = false;
    const StabilityCurve curve = equivariance_sweep(s, params, ec, broken);
    CHECK(curve.max_mode_dev() > 1e-3);
}

TEST_CASE("stability CSV has one row per theta") {
    const auto params = ModelParams::create(tiny_config(), 99);
    const Scene s = tiny_dataset(1, 99).scenes[0];
    EvalConfig ec;
    ec.theta_min = 1;
    ec.theta_max = 10;
    const StabilityCurve curve = equivariance_sweep(s, params, ec);
    const auto path = (std::filesystem::temp_directory_path() / "equiplan_curve.csv").string();
    write_stability_csv(curve, path);
    std::ifstream in(path);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    CHECK(rows == 11);  // header + 10 thetas
    std::filesystem::remove(path);
}
