"""Smoke tests for the Python bindings."""

import math

import numpy as np
import pytest

import equiplan as ep


@pytest.fixture(scope="module")
def small_setup():
    gc = ep.GeneratorConfig()
    gc.scenes = 6
    gc.m_min = 3
    gc.m_max = 4
    gc.world_extent = 50.0
    ds = ep.generate_synthetic(gc, 11)

    cfg = ep.ModelConfig()
    cfg.channels = 8
    cfg.hidden = 8
    cfg.relations = 2
    cfg.modes = 3
    cfg.blocks = 2
    params = ep.ModelParams.create(cfg, 3)
    return ds, cfg, params


def test_generation_is_deterministic():
    gc = ep.GeneratorConfig()
    gc.scenes = 3
    a = ep.generate_synthetic(gc, 5)
    b = ep.generate_synthetic(gc, 5)
    for sa, sb in zip(a.scenes, b.scenes):
        np.testing.assert_array_equal(sa.past(0), sb.past(0))
        np.testing.assert_array_equal(sa.route, sb.route)


def test_scene_shapes(small_setup):
    ds, _, _ = small_setup
    scene = ds.scenes[0]
    assert scene.past(0).shape == (4, 2)
    assert scene.future(0).shape == (6, 2)
    assert scene.route.shape[1] == 2
    assert scene.ego_index == 0


def test_scene_file_round_trip(tmp_path, small_setup):
    ds, _, _ = small_setup
    path = str(tmp_path / "scenes.jsonl")
    ep.save_scenes(ds, path)
    back = ep.load_scenes(path)
    assert len(back) == len(ds)
    np.testing.assert_array_equal(back.scenes[0].past(0), ds.scenes[0].past(0))


def test_resample_route_endpoints():
    poly = np.array([[0.0, 0.0], [3.0, 0.0], [3.0, 3.0]])
    pts = ep.resample_route(poly, 7)
    assert pts.shape == (7, 2)
    np.testing.assert_allclose(pts[0], [0, 0], atol=1e-12)
    np.testing.assert_allclose(pts[-1], [3, 3], atol=1e-9)


def test_forward_equivariance(small_setup):
    ds, _, params = small_setup
    scene = ds.scenes[0]
    g0, h0 = ep.forward(scene, params)

    theta, tx, ty = 1.1, 20.0, -7.0
    g1, h1 = ep.forward(ep.apply_se2(scene, theta, tx, ty), params)

    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, s], [-s, c]])
    expected = g0 @ rot + np.array([tx, ty])
    assert np.abs(g1 - expected).max() < 1e-9
    assert np.abs(h1 - h0).max() < 1e-9


def test_plan_and_baseline(small_setup):
    ds, _, params = small_setup
    res = ep.plan(ds.scenes[0], params)
    assert res["trajectory"].shape == (6, 2)
    assert res["modes"].shape[0] == 3
    assert 0 <= res["mode_index"] < 3
    baseline = ep.baseline_constant_velocity(ds.scenes[0])
    assert baseline.shape == (6, 2)


def test_train_and_evaluate(small_setup):
    ds, cfg, _ = small_setup
    tc = ep.TrainConfig()
    tc.epochs = 3
    tc.batch_size = 6
    tc.lr0 = 1e-3
    params, history = ep.train(ds, cfg, tc)
    assert len(history) == 3
    assert all(math.isfinite(row["loss"]) for row in history)

    report = ep.evaluate(ds, params)
    assert math.isfinite(report["l2_avg"])
    assert len(report["rows"]) == len(ds)


def test_equivariance_sweep_is_tight(small_setup):
    ds, _, params = small_setup
    curve = ep.equivariance_sweep(ds.scenes[0], params, 1, 30)
    assert curve.shape == (30, 5)
    assert curve[:, [1, 3]].max() < 1e-6


def test_checkpoint_round_trip(tmp_path, small_setup):
    ds, _, params = small_setup
    path = str(tmp_path / "ckpt.json")
    ep.save_checkpoint(params, path)
    loaded = ep.load_checkpoint(path)
    a = ep.plan(ds.scenes[0], params)
    b = ep.plan(ds.scenes[0], loaded)
    np.testing.assert_array_equal(a["trajectory"], b["trajectory"])


def test_validation_errors_surface_as_python_exceptions():
    gc = ep.GeneratorConfig()
    gc.speed_min = 0.5  # outside the allowed range
    with pytest.raises(ValueError):
        ep.generate_synthetic(gc, 1)
