#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "equiplan/decode.hpp"
#include "support.hpp"

using namespace equiplan;
using testsupport::max_abs_diff;
using testsupport::random_se2;
using testsupport::se2_rows;

namespace {

ModelConfig tiny_config(std::size_t modes = 3) {
    ModelConfig cfg;
    cfg.channels = 8;
    cfg.hidden = 8;
    cfg.relations = 2;
    cfg.modes = modes;
    cfg.blocks = 2;
    return cfg;
}

Scene tiny_scene(std::uint64_t seed, std::size_t vehicles = 3) {
    GeneratorConfig gc;
    gc.scenes = 1;
    gc.m_min = vehicles;
    gc.m_max = vehicles;
    return generate_synthetic(gc, seed).scenes[0];
}

EquivariantState state_of(const Scene& s, const ModelParams& p) {
    return forward(s, p).first;
}

}  // namespace

TEST_CASE("decode collapses zero-deviation features onto the mean position") {
    const auto params = ModelParams::create(tiny_config(), 51);
    Tensor flat(8, 2);
    for (std::size_t r = 0; r < 8; ++r) {
        flat.at(r, 0) = 4.0;
        flat.at(r, 1) = -2.0;
    }
    const ModeSet modes = decode(EquivariantState{{flat, flat}}, params);
    REQUIRE(modes.modes == 3);
    for (const auto& traj : modes.traj) {
        for (std::size_t r = 0; r < traj.rows; ++r) {
            CHECK(traj.at(r, 0) == doctest::Approx(4.0).epsilon(1e-12));
            CHECK(traj.at(r, 1) == doctest::Approx(-2.0).epsilon(1e-12));
        }
    }
}

TEST_CASE("single decoder forces the selection") {
    const auto params = ModelParams::create(tiny_config(1), 53);
    const Scene s = tiny_scene(30);
    const ModeSet modes = decode(state_of(s, params), params);
    CHECK(modes.modes == 1);
    const Plan plan = select_plan(modes, mode_scores(modes));
    CHECK(plan.mode_index == 0);
    CHECK(plan.scores.size() == 1);
}

TEST_CASE("each decoded mode is equivariant") {
    const auto params = ModelParams::create(tiny_config(), 55);
    const Scene s = tiny_scene(31, 3);
    const ModeSet base = decode(state_of(s, params), params);
    Rng rng(401);
    for (int rep = 0; rep < 100; ++rep) {
        const Se2 g = random_se2(rng);
        const ModeSet moved = decode(state_of(apply_se2(s, g), params), params);
        for (std::size_t idx = 0; idx < base.traj.size(); ++idx) {
            CHECK(max_abs_diff(moved.traj[idx], se2_rows(base.traj[idx], g)) < 1e-9);
        }
    }
}

TEST_CASE("mode score is the mean of the indicator coordinates") {
    ModeSet modes;
    modes.modes = 1;
    modes.vehicles = 1;
    modes.t_f = 2;
    Tensor traj(3, 2, {0, 0, 1, 1, 4, 2});  // indicator point (4, 2)
    modes.traj = {traj};
    modes.mean_pos = Tensor::row2(0, 0);
    CHECK(mode_scores(modes).at(0, 0) == doctest::Approx(3.0).epsilon(1e-15));
}

TEST_CASE("pure translations shift scores uniformly and keep the argmax") {
    const auto params = ModelParams::create(tiny_config(6), 57);
    const Scene s = tiny_scene(32, 3);
    const ModeSet base = decode(state_of(s, params), params);
    const Tensor s0 = mode_scores(base);
    const Plan p0 = select_plan(base, s0);

    Rng rng(402);
    for (int rep = 0; rep < 50; ++rep) {
        const Se2 g{0.0, {rng.uniform(-100, 100), rng.uniform(-100, 100)}};
        const double shift = 0.5 * (g.t.x + g.t.y);
        const ModeSet moved = decode(state_of(apply_se2(s, g), params), params);
        const Tensor s1 = mode_scores(moved);
        for (std::size_t k = 0; k < base.modes; ++k) {
            CHECK(std::abs(s1.at(0, k) - s0.at(0, k) - shift) < 1e-9);
        }
        CHECK(select_plan(moved, s1).mode_index == p0.mode_index);
    }
}

TEST_CASE("invariant scorer is stable under roto-translations") {
    const auto params = ModelParams::create(tiny_config(4), 59);
    const Scene s = tiny_scene(33, 3);
    const Tensor base = mode_scores(decode(state_of(s, params), params), ScoreMode::invariant);
    Rng rng(403);
    for (int rep = 0; rep < 100; ++rep) {
        const Scene moved = apply_se2(s, random_se2(rng));
        const Tensor scores =
            mode_scores(decode(state_of(moved, params), params), ScoreMode::invariant);
        CHECK(max_abs_diff(scores, base) < 1e-9);
    }
}

TEST_CASE("select_plan breaks score ties toward the lower index") {
    ModeSet modes;
    modes.modes = 3;
    modes.vehicles = 1;
    modes.t_f = 1;
    modes.traj = {Tensor(2, 2, {0, 0, 1, 1}), Tensor(2, 2, {2, 2, 3, 3}),
                  Tensor(2, 2, {4, 4, 5, 5})};
    modes.mean_pos = Tensor::row2(0, 0);
    Tensor scores(1, 3, {0.2, 0.9, 0.9});
    const Plan plan = select_plan(modes, scores);
    CHECK(plan.mode_index == 1);
    CHECK(plan.trajectory.rows == 1);  // indicator point excluded
    CHECK(plan.trajectory.at(0, 0) == 2.0);
}

TEST_CASE("plans translate exactly with the scene") {
    const auto params = ModelParams::create(tiny_config(5), 61);
    const Scene s = tiny_scene(34, 4);
    const PlanResult base = plan_scene(s, params);
    CHECK(base.plan.trajectory.rows == params.cfg.t_f);

    Rng rng(404);
    for (int rep = 0; rep < 50; ++rep) {
        const Se2 g{0.0, {rng.uniform(-50, 50), rng.uniform(-50, 50)}};
        const PlanResult moved = plan_scene(apply_se2(s, g), params);
        CHECK(moved.plan.mode_index == base.plan.mode_index);
        CHECK(max_abs_diff(moved.plan.trajectory, se2_rows(base.plan.trajectory, g)) < 1e-9);
    }
}
