import json
import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from gdr import (
    AffinityGraph, ConfigError, EmbeddingState, NumericalAbort, RunConfig, SamplingPlan,
    init_random, init_spectral, make_blobs, preset_config, run,
)
from gdr.optimizer import (
    GAIN_FLOOR, PRESETS, lr_at, step_batched, step_immediate, validate,
)


def test_init_random():
    a, b = init_random(10_000, 2, seed=3), init_random(10_000, 2, seed=3)
    np.testing.assert_array_equal(a.Y, b.Y)
    assert abs(a.Y.std() - 1e-2) / 1e-2 < 0.05
    assert not a.velocity.any() and np.all(a.gains == 1.0) and a.epoch == 0
    with pytest.raises(ValueError):
        init_random(1, 2)


def test_init_spectral_two_components_collapse():
    P = AffinityGraph(4, np.array([0, 2]), np.array([1, 3]), np.array([1.0, 1.0]))
    Y = init_spectral(P, 2).Y
    np.testing.assert_array_equal(Y[0], Y[1])
    np.testing.assert_array_equal(Y[2], Y[3])
    assert np.linalg.norm(Y[0] - Y[2]) > 0


def test_init_spectral_cycle_matches_dense_oracle():
    n = 8
    rows, cols = np.arange(n), (np.arange(n) + 1) % n
    order = rows < cols
    r = np.where(order, rows, cols)
    c = np.where(order, cols, rows)
    P = AffinityGraph(n, r, c, np.ones(n))
    W = np.zeros((n, n))
    W[rows, cols] = W[cols, rows] = 1.0
    Dm = np.diag(1 / np.sqrt(W.sum(1)))
    _, vecs = np.linalg.eigh(np.eye(n) - Dm @ W @ Dm)
    Y = init_spectral(P, 2).Y
    angles = scipy.linalg.subspace_angles(Y, vecs[:, 1:3])
    assert angles.max() < 1e-6


def test_init_spectral_std_and_large_component():
    X = make_blobs(800, clusters=1, seed=0)
    from gdr import build_affinities, knn_exact
    P, _ = build_affinities(knn_exact(X, 15))
    Y = init_spectral(P, 2).Y
    np.testing.assert_allclose(Y.std(axis=0), 1e-2, atol=1e-9)


def test_step_batched_zero_gradient():
    s = EmbeddingState.from_coords(np.zeros((2, 2)))
    s.velocity[:] = [[1.0, -2.0], [0.5, 0.0]]
    step_batched(s, np.zeros((2, 2)), lr=3.0, momentum=0.5)
    np.testing.assert_allclose(s.Y, [[0.5, -1.0], [0.25, 0.0]])


def test_step_batched_constant_gradient_hand_trace():
    s = EmbeddingState.from_coords(np.zeros((1, 1)))
    g = np.array([[1.0]])
    # gains: sign(g)=1 vs sign(v)=0 differ -> 1.2; then v<0 differs -> 1.4, 1.6
    # v1 = -1.2, v2 = 0.5 * -1.2 - 1.4 = -2.0, v3 = -1.0 - 1.6 = -2.6
    for _ in range(3):
        step_batched(s, g, lr=1.0, momentum=0.5)
    assert math.isclose(s.Y[0, 0], -1.2 - 2.0 - 2.6, rel_tol=1e-14)
    assert math.isclose(s.gains[0, 0], 1.6, rel_tol=1e-14)


def test_step_batched_sign_flip_gains_decay_to_floor():
    s = EmbeddingState.from_coords(np.zeros((1, 1)))
    g = np.array([[1.0]])
    step_batched(s, g, lr=1.0, momentum=0.0)
    trace = []
    for _ in range(40):
        g = -g
        step_batched(s, g, lr=1.0, momentum=0.0)
        trace.append(s.gains[0, 0])
    # velocity is -gains * previous grad, so each flipped grad matches its sign
    # and gains shrink by 0.8
    assert all(b <= a for a, b in zip(trace, trace[1:]))
    assert trace[-1] == GAIN_FLOOR


def test_step_immediate_and_schedule():
    y = np.zeros(2)
    step_immediate(y, np.array([2.0, 0.0]), lr_at(1.0, 0, 100))
    np.testing.assert_array_equal(y, [2.0, 0.0])
    E = 200
    assert math.isclose(lr_at(1.0, E - 1, E), 1.0 / E)
    assert math.isclose(sum(lr_at(0.7, e, E) for e in range(E)), 0.7 * (E + 1) / 2)
    assert lr_at(0.7, 150, E, "constant") == 0.7


@pytest.mark.parametrize("name", PRESETS)
def test_presets_validate_and_resolve(name):
    cfg = preset_config(name).resolved(1000)
    assert cfg.epochs == (1000 if cfg.normalized else 500)
    if cfg.normalized:
        assert math.isclose(cfg.lr, 1000 / cfg.k_neighbors)
    else:
        assert cfg.lr == 1.0
    json.dumps(cfg.to_dict())


def test_preset_invariants():
    t = preset_config("tsne")
    assert t.normalized and t.apply == "batched" and t.lr_schedule == "constant" and t.gains
    u = preset_config("umap")
    assert not u.normalized and u.apply == "immediate" and u.momentum == 0.0
    assert u.sampling.mode == "scalar_sampling"
    for name in ("gdr_tsne", "gdr_umap"):
        g = preset_config(name)
        assert g.apply == "batched" and g.sampling.mode == "per_edge"
        assert g.normalized == (name == "gdr_tsne")


@pytest.mark.parametrize("bad", [
    dict(name="gdr_umap", loss="frobenius", normalized=True),
    dict(name="tsne", loss="frobenius"),
    dict(name="tsne", apply="immediate"),
    dict(name="umap", normalized=True),
    dict(name="umap", momentum=0.5),
    dict(name="gdr_umap", apply="immediate"),
    dict(name="gdr_tsne", normalized=False),
    dict(name="gdr_umap", unsafe_normalized_scalar_sampling=True),
    dict(name="gdr_umap", init="pca"),
    dict(name="gdr_umap", d=4),
])
def test_invalid_configs_rejected(bad):
    bad = dict(bad)
    name = bad.pop("name")
    with pytest.raises(ConfigError):
        preset_config(name, **bad)


def test_unsafe_config_shape():
    cfg = preset_config("umap", unsafe_normalized_scalar_sampling=True)
    assert cfg.normalized and cfg.sampling.mode == "scalar_sampling"
    assert cfg.apply == "batched" and cfg.gains and cfg.momentum is None


def test_epochs_zero_returns_init():
    X = make_blobs(200, seed=0)
    cfg = preset_config("gdr_umap", epochs=0)
    init = init_random(200, 2, seed=4)
    state, report = run(X, replace(cfg, init="random"), state=init.copy())
    np.testing.assert_array_equal(state.Y, init.Y)
    assert report.epoch_times == []


def test_gdr_umap_loss_decreases_by_epoch_200():
    X = make_blobs(1000, clusters=5, seed=0)
    _, report = run(X, preset_config("gdr_umap", epochs=200, loss_every=200))
    first, last = report.loss_trace[0], report.loss_trace[-1]
    assert first["epoch"] == 0 and last["epoch"] == 200 and last["exact"]
    assert last["loss"] < first["loss"]


@pytest.mark.parametrize("name", PRESETS)
def test_deterministic_single_thread(name):
    X = make_blobs(300, clusters=3, seed=1)
    cfg = preset_config(name, epochs=60, threads=1, loss_every=0)
    a, _ = run(X, cfg)
    b, _ = run(X, cfg)
    assert a.Y.tobytes() == b.Y.tobytes()


@pytest.mark.parametrize("name,extra", [
    ("gdr_tsne", {}), ("gdr_umap", {}), ("gdr_umap", {"loss": "frobenius"}),
    ("umap", {}), ("tsne", {}), ("gdr_umap", {"accelerated": True}),
], ids=["normalized_kl", "unnormalized_kl", "frobenius", "umap_preset",
        "tsne_preset", "accelerated"])
def test_monotone_trend(name, extra):
    X = make_blobs(500, clusters=5, seed=2)
    cfg = preset_config(name, seed=2, loss_every=5, **extra)
    state, report = run(X, cfg)
    losses = np.array([r["loss"] for r in report.loss_trace])
    m = max(1, len(losses) // 10)
    assert np.median(losses[-m:]) < np.median(losses[:m])
    assert np.abs(state.Y).max() < 1e6


def test_numerical_abort_reports_epoch_and_point():
    X = make_blobs(200, seed=3)
    cfg = preset_config("gdr_umap", lr=1e15, epochs=20, loss_every=0, clip=1e300)
    with pytest.raises(NumericalAbort) as exc:
        run(X, cfg)
    assert 0 <= exc.value.point < 200 and exc.value.epoch < 20
    assert exc.value.report.aborted is not None


def test_report_json_round_trip():
    X = make_blobs(150, seed=4)
    _, report = run(X, preset_config("gdr_umap", epochs=10))
    back = json.loads(report.to_json())
    assert set(back["timings"]) >= {"knn", "affinity", "init", "optimize"}
    assert back["n"] == 150 and len(back["epoch_times"]) == 10


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 10 ** 6), d=st.sampled_from([1, 2, 3]))
def test_state_invariants_after_run(seed, d):
    X = make_blobs(80, clusters=2, dim=4, seed=seed)
    state, _ = run(X, preset_config("gdr_umap", seed=seed, epochs=15, d=d, loss_every=0))
    assert state.Y.shape == (80, d)
    assert np.isfinite(state.Y).all() and np.all(state.gains >= GAIN_FLOOR)
    assert state.epoch == 15


def test_validate_direct():
    validate(RunConfig())
    with pytest.raises(ConfigError):
        validate(RunConfig(sampling=SamplingPlan("scalar_sampling")))
