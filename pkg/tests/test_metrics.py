import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gdr import make_blobs, make_swiss_roll, preset_config, run
from gdr.metrics import (
    MetricReport,
    angle_agreement,
    evaluate,
    force_ratio_experiment,
    kmeans,
    knn_accuracy,
    manifold_preservation,
    spread_ratio,
    v_measure,
    v_measure_mean,
)
from oracles import knn_vote_loop, v_measure_table


# -- kNN accuracy --


def test_knn_separated_blobs_perfect():
    rng = np.random.default_rng(0)
    Y = np.vstack([rng.normal(0, 1, (50, 2)), rng.normal(100, 1, (50, 2))])
    labels = np.repeat([0, 1], 50)
    assert knn_accuracy(Y, labels, k=10) == 100.0


def test_knn_random_labels_near_chance():
    rng = np.random.default_rng(1)
    Y = rng.normal(size=(2000, 2))
    labels = rng.integers(0, 2, 2000)
    assert abs(knn_accuracy(Y, labels) - 50.0) <= 3.0


@pytest.mark.parametrize("seed", range(4))
def test_knn_matches_vote_loop(seed):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(80, 2))
    labels = rng.integers(0, 3, 80)
    for k in (1, 4, 7):
        assert knn_accuracy(Y, labels, k) == knn_vote_loop(Y, labels, k)


def test_knn_default_k_and_errors():
    Y = np.random.default_rng(2).normal(size=(30, 2))
    labels = np.arange(30) % 2
    # default k = min(100, n // 10) = 3
    assert knn_accuracy(Y, labels) == knn_vote_loop(Y, labels, 3)
    with pytest.raises(ValueError):
        knn_accuracy(Y, None)
    with pytest.raises(ValueError):
        knn_accuracy(Y, labels, k=30)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), angle=st.floats(0, 2 * math.pi),
       shift=st.floats(-1e3, 1e3), flip=st.booleans())
def test_knn_rigid_invariance(seed, angle, shift, flip):
    rng = np.random.default_rng(seed)
    Y = rng.integers(-50, 50, size=(60, 2)).astype(float)
    Y += rng.uniform(0, 0.1, size=Y.shape)
    labels = rng.integers(0, 3, 60)
    R = np.array([[math.cos(angle), -math.sin(angle)], [math.sin(angle), math.cos(angle)]])
    if flip:
        R = R @ np.diag([1.0, -1.0])
    assert knn_accuracy(Y @ R.T + shift, labels, 5) == knn_accuracy(Y, labels, 5)


# -- V-measure --


def test_v_measure_identical():
    labels = np.array([0, 0, 1, 1, 2, 2])
    assert v_measure(labels, labels) == (1.0, 1.0, 1.0)
    assert v_measure(labels, labels[::-1] + 7) == (1.0, 1.0, 1.0)


def test_v_measure_single_cluster():
    h, c, v = v_measure(np.array([0, 0, 1, 1]), np.zeros(4, dtype=int))
    assert (h, c, v) == (0.0, 1.0, 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_v_measure_matches_table_oracle(seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 4, 200)
    b = rng.integers(0, 5, 200)
    for x, y in zip(v_measure(a, b), v_measure_table(list(a), list(b))):
        assert abs(x - y) < 1e-10
    h, c, _ = v_measure(a, b)
    assert v_measure_mean(a, b) == 0.5 * (h + c)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=2, max_size=60))
def test_v_measure_swap_symmetry(pairs):
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    h, c, v = v_measure(a, b)
    h2, c2, v2 = v_measure(b, a)
    assert math.isclose(h, c2, abs_tol=1e-12) and math.isclose(c, h2, abs_tol=1e-12)
    assert math.isclose(v, v2, abs_tol=1e-12)
    assert -1e-12 <= v <= 1 + 1e-12


def test_v_measure_shape_mismatch():
    with pytest.raises(ValueError):
        v_measure(np.zeros(3), np.zeros(4))


# -- k-means --


def test_kmeans_k_equals_n_zero_sse():
    Y = np.random.default_rng(0).normal(size=(12, 2))
    ids, sse = kmeans(Y, 12, seed=0, return_sse=True)
    assert sse == 0.0
    assert len(set(ids)) == 12


def test_kmeans_three_blobs_recovered():
    rng = np.random.default_rng(3)
    centers = np.array([[0, 0], [20, 0], [0, 20]])
    truth = np.repeat([0, 1, 2], 40)
    Y = centers[truth] + rng.normal(size=(120, 2))
    ids = kmeans(Y, 3, seed=1)
    # partition equal up to relabeling: each cluster maps to exactly one class
    pairs = set(zip(truth, ids))
    assert len(pairs) == 3 and len({p[1] for p in pairs}) == 3


def test_kmeans_brute_force_small():
    # every 2-partition of 8 points; kmeans must reach the minimum SSE
    Y = np.array([[0, 0], [1, 0], [0, 1], [1, 1], [5, 5], [6, 5], [5, 6], [9, 9]], float)
    best = np.inf
    for mask in range(2 ** 7 - 1):
        ids = np.array([(mask >> i) & 1 for i in range(7)] + [1])
        sse = sum(((Y[ids == c] - Y[ids == c].mean(axis=0)) ** 2).sum() for c in (0, 1))
        best = min(best, sse)
    _, sse = kmeans(Y, 2, seed=0, return_sse=True)
    assert math.isclose(sse, best, rel_tol=1e-12)


def test_kmeans_deterministic():
    Y = np.random.default_rng(4).normal(size=(200, 2))
    assert np.array_equal(kmeans(Y, 4, seed=9), kmeans(Y, 4, seed=9))


def test_kmeans_empty_cluster_reseeds():
    # duplicated points force empty clusters under ++ seeding
    Y = np.vstack([np.zeros((10, 2)), np.ones((2, 2))])
    ids = kmeans(Y, 3, seed=0, restarts=1)
    assert len(ids) == 12
    with pytest.raises(ValueError):
        kmeans(Y, 13)


# -- spread ratio --


def test_spread_collapsed_is_inf():
    Y = np.array([[0.0, 0.0]] * 3 + [[1.0, 1.0]] * 3)
    assert spread_ratio(Y, np.repeat([0, 1], 3)) == math.inf


def test_spread_two_gaussian_blobs():
    rng = np.random.default_rng(5)
    Y = np.vstack([rng.normal(size=(20000, 2)), rng.normal(size=(20000, 2)) + [10, 0]])
    expected = 10 / math.sqrt(math.pi / 2)  # E|N(0, I2)| = sqrt(pi / 2)
    assert abs(expected - 7.98) < 0.01
    assert abs(spread_ratio(Y, np.repeat([0, 1], 20000)) - expected) < 0.3


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 1000), scale=st.floats(1e-3, 1e3))
def test_spread_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    Y = rng.normal(size=(40, 2))
    labels = np.arange(40) % 3
    assert math.isclose(spread_ratio(Y * scale, labels), spread_ratio(Y, labels), rel_tol=1e-9)


def test_spread_singleton_class_warns(caplog):
    Y = np.array([[0.0, 0.0], [5.0, 0.0], [6.0, 0.0]])
    with caplog.at_level("WARNING"):
        r = spread_ratio(Y, np.array([0, 1, 1]))
    assert "single point" in caplog.text
    # centroids 5.5 apart; spreads 0 and 0.5 averaged to 0.25
    assert math.isclose(r, 22.0)


def test_spread_orders_gdr_umap_above_gdr_tsne():
    data = make_blobs(500, clusters=5, seed=4)
    ys = {}
    for name in ("gdr_umap", "gdr_tsne"):
        state, _ = run(data, preset_config(name, seed=4, loss_every=0))
        ys[name] = state.Y
    assert spread_ratio(ys["gdr_umap"], data.labels) > spread_ratio(ys["gdr_tsne"], data.labels)


# -- angle agreement --


def test_angle_two_points_exact():
    Y = np.array([[0.0, 0.0], [1.0, 2.0]])
    assert angle_agreement(Y, trials=10) == 0.0


def test_angle_antipodal_pair():
    Y = np.array([[-1.0, 0.0], [1.0, 0.0]])
    res = angle_agreement(Y, trials=2, details=True)
    assert np.all(res.angles == 0.0) and res.skipped == 0


def test_angle_zero_force_skipped():
    Y = np.zeros((3, 2))
    res = angle_agreement(Y, trials=3, samples=1, details=True)
    assert res.skipped == 3 and math.isnan(res.mean)


def test_angle_in_range_for_cloud():
    Y = np.random.default_rng(0).normal(size=(300, 2))
    a = angle_agreement(Y, trials=50, seed=1)
    assert 0.0 <= a <= math.pi


# -- force ratios --


@pytest.fixture(scope="module")
def force_1000():
    return force_ratio_experiment(1000, seed=0)


def test_force_ratio_equality(force_1000):
    assert 0.9 <= force_1000.equality <= 1.1


def test_force_ratio_cancellation_value(force_1000):
    # with p = 1/(cn) the sampled ratio cancels to c p n = 1
    assert force_1000.closed_form_algebra == pytest.approx(1.0)
    assert abs(force_1000.ratio_sampled / force_1000.closed_form_algebra - 1) < 0.1


def test_force_ratio_unnormalized_smaller(force_1000):
    r = force_1000
    assert r.distance > r.distance_bound
    assert r.p_umap < 1 / (1000 ** 2 + 1)
    assert r.ratio_unnorm < r.ratio_sampled
    assert set(r.to_dict()) >= {"ratio_full", "ratio_sampled", "ratio_unnorm"}


def test_force_ratio_small_n_rejected():
    with pytest.raises(ValueError):
        force_ratio_experiment(5)


# -- manifold preservation --


def test_manifold_exact_line():
    t = np.linspace(0, 10, 200)
    assert math.isclose(manifold_preservation(np.c_[t, np.zeros(200)], t), 1.0)
    assert math.isclose(manifold_preservation(np.c_[-t, np.zeros(200)], t), 1.0)
    assert math.isclose(abs(manifold_preservation(np.c_[-t, np.zeros(200)], t, signed=True)), 1.0)


def test_manifold_shuffle_uncorrelated():
    rng = np.random.default_rng(6)
    t = np.linspace(0, 10, 2000)
    Y = np.c_[rng.permutation(t), 0.01 * rng.normal(size=2000)]
    assert manifold_preservation(Y, t) < 0.1


# -- report --


def test_metric_report_ranges_and_json():
    rep = MetricReport(knn_accuracy=97.5, v_measure=0.9, angle_mean=0.2)
    assert json.loads(rep.to_json())["knn_accuracy"] == 97.5
    for bad in ({"knn_accuracy": 101.0}, {"homogeneity": 1.5}, {"angle_mean": 4.0}):
        with pytest.raises(ValueError):
            MetricReport(**bad)


def test_evaluate_blobs_and_roll():
    data = make_blobs(300, clusters=3, seed=7)
    rep = evaluate(data.values[:, :2], data)
    assert 0 <= rep.knn_accuracy <= 100 and 0 <= rep.v_measure <= 1
    assert rep.spread_ratio > 0 and rep.manifold_rho is None
    roll = make_swiss_roll(300, seed=7)
    rep = evaluate(roll.values[:, [0, 2]], roll)
    assert rep.knn_accuracy is None and 0 <= rep.manifold_rho <= 1
