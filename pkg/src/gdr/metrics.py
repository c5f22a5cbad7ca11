"""Embedding quality metrics and force diagnostics."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.stats import spearmanr

from .gradients import GradientRegime
from .kernel import UNIT, ABParams, normalization_Z
from .sampling import full_repulsion, pair_repulsion, sample_negatives

log = logging.getLogger(__name__)


def default_k(n):
    return max(1, min(100, n // 10))


def knn_accuracy(Y, labels, k=None) -> float:
    """Leave-one-out majority-vote kNN accuracy in percent.

    Neighbors are exact Euclidean neighbors in ``Y`` excluding the point
    itself; ties go to the smallest label. ``k`` defaults to ``min(100, n/10)``.
    """
    if labels is None:
        raise ValueError("knn_accuracy needs labels")
    Y = np.asarray(Y, dtype=np.float64)
    n = len(Y)
    k = default_k(n) if k is None else int(k)
    if not 1 <= k < n:
        raise ValueError(f"need 1 <= k < n (k={k}, n={n})")
    classes, y = np.unique(np.asarray(labels), return_inverse=True)
    _, idx = cKDTree(Y).query(Y, k=k + 1)
    idx = idx.reshape(n, k + 1)
    # drop self; with duplicate points self may not come first
    is_self = idx == np.arange(n)[:, None]
    has_self = is_self.any(axis=1)
    keep = ~is_self
    keep[~has_self, -1] = False
    neigh = idx[keep].reshape(n, k)
    votes = np.zeros((n, len(classes)), dtype=np.int64)
    np.add.at(votes, (np.repeat(np.arange(n), k), y[neigh].ravel()), 1)
    pred = votes.argmax(axis=1)
    return float(100.0 * np.mean(pred == y))


def _entropy(counts):
    total = counts.sum()
    p = counts[counts > 0] / total
    return float(-(p * np.log(p)).sum())


def v_measure(labels, cluster_ids):
    """(homogeneity, completeness, v) with v the harmonic mean of the two."""
    labels = np.asarray(labels)
    cluster_ids = np.asarray(cluster_ids)
    if labels.shape != cluster_ids.shape:
        raise ValueError("labelings must cover the same points")
    _, c = np.unique(labels, return_inverse=True)
    _, k = np.unique(cluster_ids, return_inverse=True)
    table = np.zeros((c.max() + 1, k.max() + 1))
    np.add.at(table, (c, k), 1)
    n = table.sum()
    H_C = _entropy(table.sum(axis=1))
    H_K = _entropy(table.sum(axis=0))
    nz = table > 0
    joint = table[nz] / n
    # H(C|K) = -sum p(c,k) log(p(c,k) / p(k)), H(K|C) likewise
    pk = np.broadcast_to(table.sum(axis=0) / n, table.shape)[nz]
    pc = np.broadcast_to((table.sum(axis=1) / n)[:, None], table.shape)[nz]
    H_C_given_K = float(-(joint * np.log(joint / pk)).sum())
    H_K_given_C = float(-(joint * np.log(joint / pc)).sum())
    h = 1.0 if H_C == 0 else 1.0 - H_C_given_K / H_C
    comp = 1.0 if H_K == 0 else 1.0 - H_K_given_C / H_K
    v = 0.0 if h + comp == 0 else 2.0 * h * comp / (h + comp)
    return h, comp, v


def v_measure_mean(labels, cluster_ids) -> float:
    """Arithmetic mean of homogeneity and completeness."""
    h, c, _ = v_measure(labels, cluster_ids)
    return 0.5 * (h + c)


def _sq_dists(Y, centers):
    return ((Y[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _kmeans_pp(Y, k, rng):
    n = len(Y)
    centers = np.empty((k, Y.shape[1]))
    centers[0] = Y[rng.integers(n)]
    d2 = ((Y - centers[0]) ** 2).sum(axis=1)
    for c in range(1, k):
        total = d2.sum()
        i = rng.choice(n, p=d2 / total) if total > 0 else rng.integers(n)
        centers[c] = Y[i]
        d2 = np.minimum(d2, ((Y - centers[c]) ** 2).sum(axis=1))
    return centers


def _lloyd(Y, centers, max_iter, tol):
    for _ in range(max_iter):
        D = _sq_dists(Y, centers)
        ids = D.argmin(axis=1)
        new = centers.copy()
        for c in range(len(centers)):
            members = ids == c
            if members.any():
                new[c] = Y[members].mean(axis=0)
            else:
                # reseed to the point farthest from its current center
                far = D[np.arange(len(Y)), ids].argmax()
                new[c] = Y[far]
                ids[far] = c
                D[far, :] = 0.0
        shift = float(((new - centers) ** 2).sum())
        centers = new
        if shift <= tol:
            break
    ids = _sq_dists(Y, centers).argmin(axis=1)
    sse = float(((Y - centers[ids]) ** 2).sum())
    return ids, sse


def kmeans(Y, k, seed=0, restarts=10, max_iter=300, tol=1e-10, return_sse=False):
    """Lloyd's algorithm with k-means++ seeding; best of ``restarts`` by SSE."""
    Y = np.asarray(Y, dtype=np.float64)
    if not 1 <= k <= len(Y):
        raise ValueError("need 1 <= k <= n")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(max(1, restarts)):
        ids, sse = _lloyd(Y, _kmeans_pp(Y, k, rng), max_iter, tol)
        if best is None or sse < best[1]:
            best = (ids, sse)
    return best if return_sse else best[0]


def spread_ratio(Y, labels) -> float:
    """Mean centroid-to-centroid distance over mean within-class spread.

    The within-class spread of a class is its mean point-to-centroid
    distance; classes are averaged with equal weight. Returns ``inf`` when
    every class is collapsed to a point.
    """
    Y = np.asarray(Y, dtype=np.float64)
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if len(classes) < 2:
        raise ValueError("spread_ratio needs at least two classes")
    centroids = np.array([Y[labels == c].mean(axis=0) for c in classes])
    spreads = []
    for c, mu in zip(classes, centroids):
        members = Y[labels == c]
        if len(members) == 1:
            log.warning("class %s has a single point", c)
        spreads.append(np.linalg.norm(members - mu, axis=1).mean())
    iu = np.triu_indices(len(classes), 1)
    between = np.linalg.norm(centroids[:, None] - centroids[None], axis=2)[iu].mean()
    within = float(np.mean(spreads))
    if within == 0.0:
        return math.inf
    return float(between / within)


def _angle(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    ua, ub = a / na, b / nb
    return 2.0 * math.atan2(np.linalg.norm(ua - ub), np.linalg.norm(ua + ub))


@dataclass
class AngleAgreement:
    mean: float
    angles: np.ndarray
    skipped: int


def angle_agreement(Y, ab: ABParams = UNIT, regime: GradientRegime | None = None,
                    trials=100, seed=0, c=5, samples=15, details=False):
    """Mean angle (radians) between exact and O(1)-sampled repulsions.

    For each of ``trials`` random points the exact repulsion over all other
    points is compared with the average of ``c`` estimates, each built from
    ``samples`` uniform negatives. When ``n - 1 <= samples`` the sample is the
    whole set and the estimate is the exact force.
    """
    regime = regime or GradientRegime(normalized=True)
    Y = np.asarray(getattr(Y, "Y", Y), dtype=np.float64)
    n = len(Y)
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.default_rng(seed)
    Z = normalization_Z(Y, ab) if regime.normalized else None
    points = rng.choice(n, size=min(trials, n), replace=False)
    angles, skipped = [], 0
    for i in points:
        exact = full_repulsion(i, Y, ab, regime, 0.0, Z)
        if n - 1 <= samples:
            est = exact
        else:
            est = np.zeros(Y.shape[1])
            for _ in range(c):
                ks = sample_negatives(i, samples, n, rng)
                heads = np.full(samples, i)
                est += pair_repulsion(Y, heads, ks, ab, regime, 0.0, Z).sum(axis=0)
            est *= (n - 1) / (samples * c)
        if np.linalg.norm(exact) == 0 or np.linalg.norm(est) == 0:
            skipped += 1
            continue
        angles.append(_angle(exact, est))
    angles = np.asarray(angles)
    mean = float(angles.mean()) if len(angles) else float("nan")
    if details:
        return AngleAgreement(mean, angles, skipped)
    return mean


@dataclass
class ForceRatioResult:
    n: int
    c: int
    draws: int
    p_tsne: float
    p_umap: float
    distance: float
    distance_bound: float
    ratio_full: float
    ratio_sampled: float
    ratio_unnorm: float
    closed_form_stated: float
    closed_form_algebra: float

    @property
    def equality(self):
        return self.ratio_full / self.ratio_sampled

    def to_dict(self):
        return asdict(self)


def _displacements(rng, size, dim, mean_norm, std):
    mu = np.zeros(dim)
    mu[0] = mean_norm
    v = rng.normal(mu, std, size=(size, dim))
    norm = np.linalg.norm(v, axis=1)
    return 1.0 / (1.0 + norm * norm), norm


def force_ratio_experiment(n, c=15, seed=0, draws=100_000, dim=2, mean_norm=3.0,
                           std=0.1, tau=1.0, margin=1.05) -> ForceRatioResult:
    """Monte-Carlo attraction/repulsion magnitude ratios under i.i.d. displacements.

    Displacements ``v ~ N(mu, std^2 I)`` with ``|mu| = mean_norm`` and
    ``r = 1 / (1 + |v|^2)``. Per draw:

    * normalized, n repulsions: attraction ``c p r|v| / Z`` and repulsion
      ``sum over n pairs of r^2 |v| / Z^2``, with ``Z = n^2 E[r]`` (the sum
      over n^2 i.i.d. pairs concentrates, so it is taken at its mean);
    * normalized, 1 repulsion: ``Z~`` is the sum of r over n sampled pairs,
      attraction ``c p r|v| / Z~`` and one repulsion ``r^2 |v| / Z~^2``;
    * unnormalized: attraction ``p_u r|v|`` and repulsion
      ``r^2 (1 - p_u) / (1 - r) |v|`` with ``p_u = exp(-d^2 / tau)`` for a
      high-dimensional distance ``d = margin * sqrt(log(n^2 + 1) tau)``.

    ``p = 1 / (c n)``. Each ratio is E|A| / E|R| over the draws.
    """
    if n < 10:
        raise ValueError("need n >= 10")
    rng = np.random.default_rng(seed)
    p = 1.0 / (c * n)

    r_pool, norm_pool = _displacements(rng, draws + n - 1, dim, mean_norm, std)
    r_att, norm_att = _displacements(rng, draws, dim, mean_norm, std)
    r_z, _ = _displacements(rng, draws, dim, mean_norm, std)
    Z = n * n * r_z.mean()

    def window(x):
        cs = np.concatenate([[0.0], np.cumsum(x)])
        return cs[n:] - cs[:-n]

    Z_tilde = window(r_pool)
    rep_full = window(r_pool ** 2 * norm_pool) / Z ** 2
    att_full = c * p * r_att * norm_att / Z
    att_samp = c * p * r_att * norm_att / Z_tilde
    rep_samp = r_pool[:draws] ** 2 * norm_pool[:draws] / Z_tilde ** 2
    ratio_full = att_full.mean() / rep_full.mean()
    ratio_sampled = att_samp.mean() / rep_samp.mean()

    bound = math.sqrt(math.log(n * n + 1.0) * tau)
    d = margin * bound
    p_u = math.exp(-d * d / tau)
    r_rep, norm_rep = _displacements(rng, draws, dim, mean_norm, std)
    att_u = p_u * r_att * norm_att
    rep_u = r_rep ** 2 * (1.0 - p_u) / (1.0 - r_rep) * norm_rep
    ratio_unnorm = att_u.mean() / rep_u.mean()

    return ForceRatioResult(
        n=n, c=c, draws=draws, p_tsne=p, p_umap=p_u, distance=d, distance_bound=bound,
        ratio_full=float(ratio_full), ratio_sampled=float(ratio_sampled),
        ratio_unnorm=float(ratio_unnorm),
        closed_form_stated=c * p / n, closed_form_algebra=c * p * n,
    )


def manifold_preservation(Y, t, signed=False) -> float:
    """|Spearman rho| between ``t`` and the projection of Y on its first principal axis."""
    Y = np.asarray(Y, dtype=np.float64)
    Yc = Y - Y.mean(axis=0)
    _, _, vt = np.linalg.svd(Yc, full_matrices=False)
    proj = Yc @ vt[0]
    rho = float(spearmanr(proj, np.asarray(t)).statistic)
    return rho if signed else abs(rho)


@dataclass
class MetricReport:
    knn_accuracy: float | None = None
    v_measure: float | None = None
    homogeneity: float | None = None
    completeness: float | None = None
    v_measure_mean: float | None = None
    spread_ratio: float | None = None
    angle_mean: float | None = None
    force_ratio_normalized: float | None = None
    force_ratio_unnormalized: float | None = None
    manifold_rho: float | None = None

    def __post_init__(self):
        if self.knn_accuracy is not None and not 0 <= self.knn_accuracy <= 100:
            raise ValueError("knn_accuracy outside [0, 100]")
        for name in ("v_measure", "homogeneity", "completeness", "v_measure_mean"):
            val = getattr(self, name)
            if val is not None and not -1e-12 <= val <= 1 + 1e-12:
                raise ValueError(f"{name} outside [0, 1]")
        if self.angle_mean is not None and not 0 <= self.angle_mean <= math.pi:
            raise ValueError("angle_mean outside [0, pi]")

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def evaluate(Y, data, k=None, seed=0, restarts=10) -> MetricReport:
    """kNN accuracy, k-means V-measure and spread ratio (with labels) and
    manifold preservation (swiss roll) for an embedding of ``data``."""
    report = MetricReport()
    labels = getattr(data, "labels", None)
    if labels is not None:
        report.knn_accuracy = knn_accuracy(Y, labels, k)
        n_classes = len(np.unique(labels))
        ids = kmeans(Y, n_classes, seed=seed, restarts=restarts)
        h, c, v = v_measure(labels, ids)
        report.homogeneity, report.completeness, report.v_measure = h, c, v
        report.v_measure_mean = 0.5 * (h + c)
        if n_classes >= 2:
            report.spread_ratio = spread_ratio(Y, labels)
    t = getattr(data, "manifold_param", None)
    if t is not None:
        report.manifold_rho = manifold_preservation(Y, t)
    return report
