"""Low-dimensional similarity q = 1 / (1 + a * dist^(2b)) and its normalizer."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numba
import numpy as np
from scipy.optimize import curve_fit

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ABParams:
    a: float = 1.0
    b: float = 1.0
    source: str = "unit"
    min_dist: float | None = None
    spread: float | None = None

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"a and b must be positive, got a={self.a}, b={self.b}")
        if self.source == "unit" and (self.a != 1.0 or self.b != 1.0):
            raise ValueError("unit ABParams must have a = b = 1")

    @property
    def is_unit(self) -> bool:
        return self.a == 1.0 and self.b == 1.0


UNIT = ABParams()


def q_unnormalized(dist2, ab: ABParams = UNIT):
    """(1 + a * dist2**b)**-1 for squared distances ``dist2``."""
    dist2 = np.asarray(dist2, dtype=np.float64)
    if ab.b == 1.0:
        return 1.0 / (1.0 + ab.a * dist2)
    return 1.0 / (1.0 + ab.a * np.power(dist2, ab.b))


@numba.njit(parallel=True, cache=True)
def _z_kernel(Y, a, b):
    n, d = Y.shape
    partial = np.zeros(n)
    for i in numba.prange(n):
        s = 0.0
        for j in range(n):
            if j == i:
                continue
            u = 0.0
            for c in range(d):
                diff = Y[i, c] - Y[j, c]
                u += diff * diff
            if b == 1.0:
                s += 1.0 / (1.0 + a * u)
            else:
                s += 1.0 / (1.0 + a * u ** b)
        partial[i] = s
    return partial.sum()


def normalization_Z(Y, ab: ABParams = UNIT) -> float:
    """Sum of q over all ordered pairs k != l (exact, O(n^2))."""
    Y = np.ascontiguousarray(getattr(Y, "Y", Y), dtype=np.float64)
    if Y.shape[0] < 2:
        raise ValueError("need at least two points")
    return float(_z_kernel(Y, float(ab.a), float(ab.b)))


def _target_curve(x, min_dist, spread):
    return np.where(x <= min_dist, 1.0, np.exp(-(x - min_dist) / spread))


def fit_ab(min_dist=0.1, spread=1.0) -> ABParams:
    """Least-squares fit of (a, b) to the offset-exponential target curve.

    The target is 1 for d <= min_dist and exp(-(d - min_dist) / spread)
    beyond, sampled at 300 points on [0, 3 * spread]. Falls back to a = b = 1
    if the optimizer fails. The curve family cannot match every target; a
    warning is logged when the RMSE exceeds 0.02 (it stays below that for
    min_dist in roughly [0.05, 0.3] at unit spread).
    """
    if spread <= 0 or min_dist < 0 or min_dist >= 10 * spread:
        raise ValueError("need spread > 0 and 0 <= min_dist < 10 * spread")
    x = np.linspace(0.0, 3.0 * spread, 300)
    y = _target_curve(x, min_dist, spread)

    def curve(x, a, b):
        return 1.0 / (1.0 + a * x ** (2.0 * b))

    try:
        (a, b), _ = curve_fit(curve, x, y, p0=(1.0, 1.0), bounds=(1e-6, 100.0))
    except (RuntimeError, ValueError):
        log.warning("a/b fit did not converge; using a = b = 1")
        return UNIT
    rmse = float(np.sqrt(np.mean((curve(x, a, b) - y) ** 2)))
    if rmse >= 0.02:
        log.warning("a/b fit RMSE %.3g above 0.02 for min_dist=%g", rmse, min_dist)
    return ABParams(float(a), float(b), "fitted", min_dist, spread)
