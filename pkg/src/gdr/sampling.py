"""Which attractions and repulsions get applied in each epoch.

Two schemes for the attractive edges:

* ``per_edge``: every edge every epoch, force multiplied by its weight;
* ``scalar_sampling``: an edge of weight p is applied in roughly ``p * epochs``
  evenly spaced epochs, without the weight multiplier.

Repulsions come from a constant number of uniformly drawn points per applied
attraction. :func:`full_repulsion` is the exact O(n) sum, kept as a reference
for diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .gradients import CLIP, GradientRegime, frobenius_forces, tsne_forces, umap_forces
from .kernel import UNIT, ABParams, normalization_Z, q_unnormalized

MODES = ("per_edge", "scalar_sampling")


@dataclass(frozen=True)
class SamplingPlan:
    mode: str = "per_edge"
    neg_samples: int = 1
    accelerated: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown sampling mode {self.mode!r}")
        if self.neg_samples < 1:
            raise ValueError("neg_samples must be >= 1")

    @property
    def frequency_proportional(self) -> bool:
        return self.mode == "scalar_sampling" or self.accelerated


class EdgeSchedule:
    """Deterministic stride schedule.

    With frequency-proportional application an edge of weight ``p`` fires at
    1-based epoch ``t`` iff ``floor(t p) > floor((t - 1) p)``, i.e. once every
    ``1 / p`` epochs and ``floor(epochs * p)`` times in total.
    """

    def __init__(self, weights, epochs, proportional):
        if epochs < 1:
            raise ValueError("epochs must be >= 1")
        self.weights = np.asarray(weights, dtype=np.float64)
        self.epochs = int(epochs)
        self.proportional = bool(proportional)

    def due(self, epoch):
        """Boolean mask of edges applied at 0-based ``epoch`` (None = all)."""
        if not self.proportional:
            return None
        t = epoch + 1
        return np.floor(t * self.weights) > np.floor((t - 1) * self.weights)

    def counts(self):
        """Total applications of each edge over the whole run."""
        if not self.proportional:
            return np.full(len(self.weights), self.epochs)
        return np.floor(self.epochs * self.weights).astype(np.int64)

    def epochs_of(self, edge):
        w = self.weights[edge]
        t = np.arange(1, self.epochs + 1)
        if not self.proportional:
            return t - 1
        return (t - 1)[np.floor(t * w) > np.floor((t - 1) * w)]


def edge_schedule(weights, epochs, plan: SamplingPlan) -> EdgeSchedule:
    return EdgeSchedule(weights, epochs, plan.frequency_proportional)


def sample_negatives(i, count, n, rng):
    """``count`` ids drawn uniformly (with replacement) from [0, n) minus ``i``."""
    if n < 2:
        raise ValueError("need n >= 2")
    draws = rng.integers(0, n - 1, size=count)
    return draws + (draws >= i)


def sample_negatives_for(heads, n, rng):
    """One uniform non-self negative for each entry of ``heads``."""
    draws = rng.integers(0, n - 1, size=len(heads))
    return draws + (draws >= heads)


def effective_scalars(p, p_bar, plan: SamplingPlan):
    """Explicit (attraction, repulsion) multipliers for an edge of weight ``p``.

    Scalar sampling encodes the weights in the application frequency and uses
    unit multipliers; per-edge and accelerated modes multiply explicitly
    (accelerated also samples by frequency, so the weights act squared).
    """
    if plan.mode == "scalar_sampling" and not plan.accelerated:
        return np.ones_like(np.asarray(p, dtype=np.float64)), 1.0
    return np.asarray(p, dtype=np.float64), 1.0 - p_bar


@numba.njit(parallel=True, cache=True)
def _exact_repulsion_kernel(Y, a, b, mode, eps, clip):
    # mode 0: sum 4 w q^2 v (caller divides by Z), also returns Z
    # mode 1: sum clip(2 b q / (eps + u) v); mode 2: sum 4 w q^3 v
    n, d = Y.shape
    R = np.zeros((n, d))
    zpart = np.zeros(n)
    for i in numba.prange(n):
        z = 0.0
        for k in range(n):
            if k == i:
                continue
            u = 0.0
            for c in range(d):
                diff = Y[i, c] - Y[k, c]
                u += diff * diff
            if b == 1.0:
                q = 1.0 / (1.0 + a * u)
                w = a
            else:
                q = 1.0 / (1.0 + a * u ** b)
                w = a * b * u ** (b - 1.0) if u > 0 else 0.0
            z += q
            if mode == 0:
                coef = 4.0 * w * q * q
            elif mode == 1:
                coef = 2.0 * b * q / (eps + u) if eps + u > 0 else 0.0
            else:
                coef = 4.0 * w * q * q * q
            for c in range(d):
                f = coef * (Y[i, c] - Y[k, c])
                if mode == 1:
                    f = min(max(f, -clip), clip)
                R[i, c] += f
        zpart[i] = z
    return R, zpart.sum()


def exact_repulsion(Y, ab: ABParams, regime: GradientRegime, p_bar=0.0, clip=CLIP):
    """Exact repulsion on every point, plus the exact Z.

    Normalized KL returns the full ``sum_k 4 q^2 / Z v`` term. Unnormalized KL
    returns ``(1 - p_bar) sum_k clip(2 b q / (eps + u) v)`` and Frobenius
    ``sum_k 4 q^3 v``.
    """
    Y = np.ascontiguousarray(Y, dtype=np.float64)
    if regime.loss == "frobenius":
        mode = 2
    elif regime.normalized:
        mode = 0
    else:
        mode = 1
    clip_val = np.inf if clip is None else float(clip)
    R, Z = _exact_repulsion_kernel(Y, float(ab.a), float(ab.b), mode, float(regime.eps), clip_val)
    if mode == 0:
        R /= Z
    elif mode == 1:
        R *= 1.0 - p_bar
    return R, Z


def full_repulsion(i, Y, ab: ABParams = UNIT, regime: GradientRegime | None = None,
                   p_bar=0.0, Z=None):
    """Exact repulsion on point ``i`` summed over every other point (unclipped)."""
    regime = regime or GradientRegime(normalized=True)
    Y = np.asarray(getattr(Y, "Y", Y), dtype=np.float64)
    n = Y.shape[0]
    if n < 2:
        raise ValueError("need n >= 2")
    others = np.delete(np.arange(n), i)
    return pair_repulsion(Y, np.full(n - 1, i), others, ab, regime, p_bar, Z).sum(axis=0)


def pair_repulsion(Y, heads, tails, ab: ABParams, regime: GradientRegime, p_bar=0.0, Z=None):
    """Repulsive force on ``Y[heads]`` from ``Y[tails]``, one row per pair."""
    v = Y[heads] - Y[tails]
    u = np.einsum("ij,ij->i", v, v)
    q = q_unnormalized(u, ab)
    if regime.loss == "frobenius":
        return frobenius_forces(0.0, q, v, ab)[1]
    if regime.normalized:
        if Z is None:
            Z = normalization_Z(Y, ab)
        return tsne_forces(0.0, q, Z, v, ab)[1]
    return umap_forces(0.0, q, v, ab, regime.eps, p_bar)[1]
