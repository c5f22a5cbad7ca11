"""Per-pair attractive/repulsive forces and exact dense losses.

Forces are displacements (negative gradient directions) acting on ``y_i``
for ``v = y_i - y_j``. All force functions are vectorized: scalars broadcast
against the leading axes of ``v`` (shape ``(..., d)``).

Sign and scale conventions, checked against finite differences:

* normalized KL: summing the forces of every ordered pair ``(i, j)`` gives
  ``-dL/dy_i`` directly;
* unnormalized KL and Frobenius: each ordered pair's force is half of the
  gradient contribution, so ``-dL/dy_i = 2 * sum_j (A_ij + R_ij)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .affinity import AffinityGraph
from .kernel import UNIT, ABParams, q_unnormalized

DEFAULT_EPS = 1e-3
CLIP = 4.0


@dataclass(frozen=True)
class GradientRegime:
    normalized: bool = False
    loss: str = "kl"
    accelerated: bool = False
    eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.loss not in ("kl", "frobenius"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.loss == "frobenius" and self.normalized:
            raise ValueError("the Frobenius loss is only supported unnormalized")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")


def _coef(u, ab):
    """a * b * u**(b - 1), the chain-rule factor of dq/du (0 at u = 0, b < 1)."""
    if ab.b == 1.0:
        return np.full_like(u, ab.a)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = ab.a * ab.b * np.power(u, ab.b - 1.0)
    return np.where(u > 0, w, 0.0)


def _sq(v):
    return np.einsum("...i,...i->...", v, v)


def tsne_forces(p_hat, q, Z, v, ab: ABParams = UNIT):
    """Normalized-KL forces.

    ``q`` is the *unnormalized* similarity, so ``Z * q_hat == q`` never has to
    be formed by division. Attraction ``-4 p_hat q v`` and repulsion
    ``4 q (q / Z) v`` (times ``a b |v|^(2(b-1))`` for general a, b).
    """
    v = np.asarray(v, dtype=np.float64)
    w = _coef(_sq(v), ab)
    p_hat, q = np.asarray(p_hat), np.asarray(q)
    attraction = (-4.0 * w * p_hat * q)[..., None] * v
    repulsion = (4.0 * w * q * q / Z)[..., None] * v
    return attraction, repulsion


def umap_forces(p, q, v, ab: ABParams = UNIT, eps=DEFAULT_EPS, p_bar=0.0):
    """Unnormalized-KL forces.

    Attraction ``-2 a b |v|^(2(b-1)) q p v`` and repulsion
    ``2 b / (eps + |v|^2) q (1 - p_bar) v``. ``p_bar`` is the affinity used in
    the repulsion's ``1 - p`` factor (the mean edge weight for non-edges).
    """
    v = np.asarray(v, dtype=np.float64)
    u = _sq(v)
    w = _coef(u, ab)
    p, q, p_bar = np.asarray(p), np.asarray(q), np.asarray(p_bar)
    attraction = (-2.0 * w * q * p)[..., None] * v
    with np.errstate(divide="ignore", invalid="ignore"):
        rep = np.where(u + eps > 0, 2.0 * ab.b * q * (1.0 - p_bar) / (eps + u), 0.0)
    repulsion = rep[..., None] * v
    return attraction, repulsion


def umap_forces_reformulated(p, q, v, p_bar):
    """The a = b = 1, eps = 0 form: ``-2 p q v`` and ``2 q^2 (1 - p_bar)/(1 - q) v``."""
    v = np.asarray(v, dtype=np.float64)
    p, q, p_bar = np.asarray(p), np.asarray(q), np.asarray(p_bar)
    attraction = (-2.0 * p * q)[..., None] * v
    repulsion = (2.0 * q * q * (1.0 - p_bar) / (1.0 - q))[..., None] * v
    return attraction, repulsion


def frobenius_forces(p, q, v, ab: ABParams = UNIT):
    """Squared-Frobenius forces ``-4 p q^2 v`` and ``4 q^3 v`` (no eps needed)."""
    v = np.asarray(v, dtype=np.float64)
    w = _coef(_sq(v), ab)
    p, q = np.asarray(p), np.asarray(q)
    attraction = (-4.0 * w * p * q * q)[..., None] * v
    repulsion = (4.0 * w * q * q * q)[..., None] * v
    return attraction, repulsion


def clip_forces(f, limit=CLIP):
    return np.clip(f, -limit, limit)


# -- dense reference implementations (O(n^2), for tests and diagnostics) --


def _dense_P(P, n, fill=0.0):
    if isinstance(P, AffinityGraph):
        return P.to_dense(fill)
    P = np.array(P, dtype=np.float64)
    if fill:
        off = ~np.eye(n, dtype=bool)
        P[off & (P == 0)] = fill
    np.fill_diagonal(P, 0.0)
    return P


def _pairwise(Y, ab):
    Y = np.asarray(getattr(Y, "Y", Y), dtype=np.float64)
    V = Y[:, None, :] - Y[None, :, :]
    u = _sq(V)
    Q = q_unnormalized(u, ab)
    np.fill_diagonal(Q, 0.0)
    return Y, V, u, Q


def _default_p_bar(P):
    if isinstance(P, AffinityGraph):
        return P.p_mean
    P = np.asarray(P)
    iu = np.triu_indices_from(P, 1)
    vals = P[iu]
    vals = vals[vals > 0]
    return float(vals.mean()) if len(vals) else 0.0


def kl_loss_normalized(P, Y, ab: ABParams = UNIT) -> float:
    """sum p_hat log(p_hat / q_hat) with both matrices normalized to sum 1."""
    Y, _, _, Q = _pairwise(Y, ab)
    P = _dense_P(P, len(Y))
    P_hat = P / P.sum()
    Q_hat = Q / Q.sum()
    m = P_hat > 0
    return float(np.sum(P_hat[m] * np.log(P_hat[m] / Q_hat[m])))


def kl_loss_unnormalized(P, Y, ab: ABParams = UNIT, p_bar=None, floor=1e-12) -> float:
    """Sum of Bernoulli KLs over ordered pairs; non-edges take ``p_bar``."""
    if p_bar is None:
        p_bar = _default_p_bar(P)
    Y, _, u, Q = _pairwise(Y, ab)
    n = len(Y)
    P = _dense_P(P, n, p_bar)
    off = ~np.eye(n, dtype=bool)
    p, q = P[off], Q[off]
    one_minus_q = np.maximum(ab.a * np.power(u[off], ab.b) * q, floor)
    total = 0.0
    pos = p > 0
    total += np.sum(p[pos] * np.log(p[pos] / q[pos]))
    neg = p < 1
    total += np.sum((1 - p[neg]) * np.log((1 - p[neg]) / one_minus_q[neg]))
    return float(total)


def frobenius_loss(P, Y, ab: ABParams = UNIT) -> float:
    """sum over ordered pairs i != j of (p - q)^2; non-edges have p = 0."""
    Y, _, _, Q = _pairwise(Y, ab)
    P = _dense_P(P, len(Y))
    D = P - Q
    np.fill_diagonal(D, 0.0)
    return float(np.sum(D * D))


def dense_loss(P, Y, ab: ABParams, regime: GradientRegime, p_bar=None) -> float:
    if regime.loss == "frobenius":
        return frobenius_loss(P, Y, ab)
    if regime.normalized:
        return kl_loss_normalized(P, Y, ab)
    return kl_loss_unnormalized(P, Y, ab, p_bar)


def dense_forces(P, Y, ab: ABParams, regime: GradientRegime, p_bar=None):
    """All pairwise forces as ``(attraction, repulsion)`` arrays of shape (n, n, d).

    Entry ``[i, j]`` is the force on ``y_i`` from the ordered pair (i, j).
    """
    Y, V, u, Q = _pairwise(Y, ab)
    n = len(Y)
    if regime.loss == "frobenius":
        A, R = frobenius_forces(_dense_P(P, n), Q, V, ab)
    elif regime.normalized:
        Pd = _dense_P(P, n)
        A, R = tsne_forces(Pd / Pd.sum(), Q, Q.sum(), V, ab)
    else:
        if p_bar is None:
            p_bar = _default_p_bar(P)
        Pd = _dense_P(P, n, p_bar)
        A, R = umap_forces(Pd, Q, V, ab, regime.eps, Pd)
    idx = np.arange(n)
    A[idx, idx] = 0.0
    R[idx, idx] = 0.0
    return A, R


def dense_gradient(P, Y, ab: ABParams, regime: GradientRegime, p_bar=None):
    """dL/dY assembled from the per-pair forces (no clipping)."""
    A, R = dense_forces(P, Y, ab, regime, p_bar)
    total = (A + R).sum(axis=1)
    scale = 1.0 if (regime.normalized and regime.loss == "kl") else 2.0
    return -scale * total
