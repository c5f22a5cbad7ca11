"""High-dimensional affinities P built on a kNN graph.

Two kernels are supported: a perplexity-calibrated Gaussian and a
shifted exponential calibrated so that each row sums to log2(k). Neither
applies a global normalization; that is a property of the optimization
regime and happens downstream.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse

from .knn import NeighborGraph

log = logging.getLogger(__name__)

BRACKET = (1e-12, 1e12)
MAX_ITER = 200
TOL = 1e-5
MIN_WEIGHT = 1e-12


@dataclass(frozen=True)
class KernelParams:
    """Per-point kernel parameters after calibration.

    ``scale`` holds sigma_i for the Gaussian kernel and tau_i for the
    exponential kernel. ``clamped`` flags rows whose calibration target
    could not be met.
    """

    mode: str
    scale: np.ndarray
    rho: np.ndarray
    pseudo_distance: bool
    clamped: np.ndarray
    perplexity: float | None = None

    @property
    def sigma(self):
        return self.scale if self.mode == "gaussian_perplexity" else None

    @property
    def tau(self):
        return self.scale if self.mode == "umap_exponential" else None


@dataclass(frozen=True)
class AffinityGraph:
    """Symmetric sparse affinities, stored once per unordered pair (i < j)."""

    n: int
    rows: np.ndarray
    cols: np.ndarray
    weights: np.ndarray

    @property
    def p_sum(self) -> float:
        """Sum over directed pairs, i.e. twice the stored sum."""
        return 2.0 * float(self.weights.sum())

    @property
    def p_mean(self) -> float:
        return float(self.weights.mean()) if len(self.weights) else 0.0

    @property
    def n_edges(self) -> int:
        return len(self.weights)

    def directed(self):
        """Both orientations of every edge as (heads, tails, weights)."""
        heads = np.concatenate([self.rows, self.cols])
        tails = np.concatenate([self.cols, self.rows])
        return heads, tails, np.concatenate([self.weights, self.weights])

    def to_dense(self, fill=0.0):
        P = np.full((self.n, self.n), float(fill))
        np.fill_diagonal(P, 0.0)
        P[self.rows, self.cols] = self.weights
        P[self.cols, self.rows] = self.weights
        return P

    def to_csr(self):
        heads, tails, w = self.directed()
        return scipy.sparse.csr_matrix((w, (heads, tails)), shape=(self.n, self.n))

    def dump_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["i", "j", "p"])
            for i, j, p in zip(self.rows, self.cols, self.weights):
                writer.writerow([int(i), int(j), repr(float(p))])


def _bisect_log(objective, lo, hi):
    """Bisection on log-scale for an increasing ``objective`` with a root.

    Returns (x, converged). ``objective`` returns a signed relative residual.
    """
    llo, lhi = np.log(lo), np.log(hi)
    f_lo, f_hi = objective(lo), objective(hi)
    if f_lo > 0 or f_hi < 0:
        return float(np.exp(0.5 * (llo + lhi))), False
    mid = 0.5 * (llo + lhi)
    for _ in range(MAX_ITER):
        mid = 0.5 * (llo + lhi)
        f = objective(np.exp(mid))
        if abs(f) < TOL * 1e-2:
            break
        if f < 0:
            llo = mid
        else:
            lhi = mid
    return float(np.exp(mid)), True


def _entropy_bits(d2_scaled, sigma):
    # distribution p_j ∝ exp(-d^2 / 2 sigma^2); shift by min for stability
    z = -(d2_scaled - d2_scaled.min()) / (2.0 * sigma * sigma)
    w = np.exp(z)
    s = w.sum()
    p = w / s
    nz = p > 0
    return float(-(p[nz] * np.log2(p[nz])).sum())


def calibrate_sigma(row_distances, perplexity):
    """Find sigma so that 2**H of the Gaussian row distribution is ``perplexity``.

    Returns ``(sigma, ok)``; ``ok`` is False when the target is unreachable,
    in which case the bracket midpoint (in log-space) is returned.
    """
    d = np.asarray(row_distances, dtype=np.float64)
    k = len(d)
    scale = float(d.max()) if d.max() > 0 else 1.0
    d2 = (d / scale) ** 2
    if k < 2 or not 1.0 < perplexity < k or np.ptp(d2) == 0.0:
        log.warning("perplexity %.3g unreachable for row of %d distances", perplexity, k)
        return float(np.exp(0.5 * sum(np.log(BRACKET)))) * scale, False
    target = np.log2(perplexity)

    def objective(sigma):
        return (_entropy_bits(d2, sigma) - target) / target

    sigma, ok = _bisect_log(objective, *BRACKET)
    return sigma * scale, ok


def _exp_row_sum(shifted, tau):
    return float(np.exp(-shifted / tau).sum())


def calibrate_tau(row_distances, rho, k=None):
    """Find tau with sum_j exp(-max(0, d_j - rho) / tau) == log2(k).

    ``k`` defaults to the row length. Returns ``(tau, ok)``.
    """
    d = np.asarray(row_distances, dtype=np.float64)
    k = len(d) if k is None else k
    shifted = np.maximum(d - rho, 0.0)
    scale = float(shifted.max()) if shifted.max() > 0 else 1.0
    shifted = shifted / scale
    target = np.log2(k)
    n_ties = int(np.count_nonzero(shifted == 0.0))
    if k < 2 or n_ties >= target or len(d) <= target:
        log.warning("log2(k) target unreachable (ties=%d, k=%d)", n_ties, k)
        return float(np.exp(0.5 * sum(np.log(BRACKET)))) * scale, False

    def objective(tau):
        return (_exp_row_sum(shifted, tau) - target) / target

    tau, ok = _bisect_log(objective, *BRACKET)
    return tau * scale, ok


def calibrate(graph: NeighborGraph, mode="umap_exponential", perplexity=30.0,
              pseudo_distance=True) -> KernelParams:
    """Calibrate every row of ``graph`` for the chosen kernel."""
    n = graph.n
    scale = np.empty(n)
    clamped = np.zeros(n, dtype=bool)
    rho = graph.distances[:, 0].copy() if pseudo_distance else np.zeros(n)
    for i in range(n):
        row = graph.distances[i]
        if mode == "gaussian_perplexity":
            s, ok = calibrate_sigma(row - rho[i], perplexity)
        elif mode == "umap_exponential":
            s, ok = calibrate_tau(row, rho[i], graph.k)
        else:
            raise ValueError(f"unknown kernel mode {mode!r}")
        scale[i] = s
        clamped[i] = not ok
    return KernelParams(mode, scale, rho, pseudo_distance, clamped,
                        perplexity if mode == "gaussian_perplexity" else None)


def directed_affinities(graph: NeighborGraph, params: KernelParams):
    """Directed weights p_{j|i} as an ``n x k`` array aligned with ``graph``.

    Gaussian mode gives the unnormalized numerators exp(-d^2 / 2 sigma_i^2);
    exponential mode gives exp(-(d - rho_i) / tau_i) (rho_i = 0 when the
    pseudo-distance is off).
    """
    d = graph.distances - params.rho[:, None]
    d = np.maximum(d, 0.0)
    s = params.scale[:, None]
    if params.mode == "gaussian_perplexity":
        return np.exp(-(d * d) / (2.0 * s * s))
    return np.exp(-d / s)


def symmetrize(graph: NeighborGraph, weights, mode="union") -> AffinityGraph:
    """Combine p_{j|i} and p_{i|j} into one weight per unordered pair.

    ``average`` gives (p + p') / 2 and ``union`` gives p + p' - p p'. A
    reverse edge absent from the kNN graph counts as 0.
    """
    n = graph.n
    rows = np.repeat(np.arange(n), graph.k)
    cols = graph.indices.ravel()
    vals = np.asarray(weights, dtype=np.float64).ravel()
    P = scipy.sparse.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    P.sum_duplicates()
    Pt = P.T.tocsr()
    if mode == "average":
        S = (P + Pt) * 0.5
    elif mode == "union":
        S = P + Pt - P.multiply(Pt)
    else:
        raise ValueError(f"unknown symmetrization {mode!r}")
    S = scipy.sparse.triu(S, k=1).tocoo()
    keep = S.data >= MIN_WEIGHT
    order = np.lexsort((S.col[keep], S.row[keep]))
    return AffinityGraph(
        n,
        S.row[keep][order].astype(np.int64),
        S.col[keep][order].astype(np.int64),
        np.minimum(S.data[keep][order], 1.0),
    )


def build_affinities(graph: NeighborGraph, mode="umap_exponential", perplexity=30.0,
                     pseudo_distance=True, symmetrization="union", row_normalize=None):
    """Calibrate, evaluate and symmetrize in one call.

    ``row_normalize`` divides each row of directed weights by its sum before
    symmetrizing, turning the Gaussian numerators into the conditional
    distributions whose perplexity was calibrated. It defaults to on for the
    Gaussian kernel and off for the exponential kernel. Returns
    ``(AffinityGraph, KernelParams)``.
    """
    params = calibrate(graph, mode, perplexity, pseudo_distance)
    n_clamped = int(params.clamped.sum())
    if n_clamped:
        log.warning("%d of %d rows could not be calibrated exactly", n_clamped, graph.n)
    W = directed_affinities(graph, params)
    if row_normalize is None:
        row_normalize = mode == "gaussian_perplexity"
    if row_normalize:
        W = W / W.sum(axis=1, keepdims=True)
    return symmetrize(graph, W, symmetrization), params
