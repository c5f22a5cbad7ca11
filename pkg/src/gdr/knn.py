"""k-nearest-neighbor graphs: exact brute force and nearest-neighbor descent."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .dataset import DataMatrix


@dataclass(frozen=True)
class NeighborGraph:
    """Per-point neighbor ids and Euclidean distances, ascending per row."""

    indices: np.ndarray
    distances: np.ndarray

    @property
    def n(self) -> int:
        return self.indices.shape[0]

    @property
    def k(self) -> int:
        return self.indices.shape[1]


def _as_array(data):
    values = data.values if isinstance(data, DataMatrix) else data
    return np.ascontiguousarray(values, dtype=np.float64)


def _check_k(n, k):
    if not 1 <= k < n:
        raise ValueError(f"k must satisfy 1 <= k < n (k={k}, n={n})")


@numba.njit(inline="always")
def _dist(X, i, j):
    s = 0.0
    for c in range(X.shape[1]):
        diff = X[i, c] - X[j, c]
        s += diff * diff
    return np.sqrt(s)


@numba.njit(inline="always")
def _insert_sorted(ind_row, dist_row, j, d):
    # Row is sorted by (distance, index); caller guarantees (d, j) beats the tail.
    k = ind_row.shape[0]
    pos = k - 1
    while pos > 0 and (
        dist_row[pos - 1] > d or (dist_row[pos - 1] == d and ind_row[pos - 1] > j)
    ):
        ind_row[pos] = ind_row[pos - 1]
        dist_row[pos] = dist_row[pos - 1]
        pos -= 1
    ind_row[pos] = j
    dist_row[pos] = d
    return pos


@numba.njit(parallel=True, cache=True)
def _knn_exact_kernel(X, k):
    n = X.shape[0]
    indices = np.empty((n, k), dtype=np.int64)
    distances = np.empty((n, k), dtype=np.float64)
    for i in numba.prange(n):
        ind_row = np.full(k, n, dtype=np.int64)
        dist_row = np.full(k, np.inf)
        for j in range(n):
            if j == i:
                continue
            d = _dist(X, i, j)
            # j increases, so equal distances keep the lower index
            if d < dist_row[k - 1]:
                _insert_sorted(ind_row, dist_row, j, d)
        indices[i] = ind_row
        distances[i] = dist_row
    return indices, distances


def knn_exact(data, k):
    """Exact k nearest neighbors by brute force; ties go to the lower index."""
    X = _as_array(data)
    _check_k(X.shape[0], k)
    indices, distances = _knn_exact_kernel(X, k)
    return NeighborGraph(indices, distances)


@numba.njit(inline="always")
def _heap_push(ind, dist, flags, i, j, d):
    k = ind.shape[1]
    if d > dist[i, k - 1] or (d == dist[i, k - 1] and j >= ind[i, k - 1]):
        return 0
    for s in range(k):
        if ind[i, s] == j:
            return 0
    pos = _insert_sorted(ind[i], dist[i], j, d)
    # shift the flag column alongside the insertion
    for s in range(k - 1, pos, -1):
        flags[i, s] = flags[i, s - 1]
    flags[i, pos] = True
    return 1


@numba.njit(inline="always")
def _cand_push(cand, prio, count, i, j, p):
    m = cand.shape[1]
    c = count[i]
    for s in range(c):
        if cand[i, s] == j:
            return
    if c < m:
        cand[i, c] = j
        prio[i, c] = p
        count[i] = c + 1
        return
    worst = 0
    for s in range(1, m):
        if prio[i, s] > prio[i, worst]:
            worst = s
    if p < prio[i, worst]:
        cand[i, worst] = j
        prio[i, worst] = p


@numba.njit(cache=True)
def _nn_descent_kernel(X, k, iters, max_cand, delta, seed):
    np.random.seed(seed)
    n = X.shape[0]
    ind = np.full((n, k), n, dtype=np.int64)
    dist = np.full((n, k), np.inf)
    flags = np.zeros((n, k), dtype=np.bool_)

    for i in range(n):
        filled = 0
        while filled < k:
            j = np.random.randint(0, n)
            if j != i:
                filled += _heap_push(ind, dist, flags, i, j, _dist(X, i, j))

    new_c = np.empty((n, max_cand), dtype=np.int64)
    new_p = np.empty((n, max_cand))
    new_n = np.zeros(n, dtype=np.int64)
    old_c = np.empty((n, max_cand), dtype=np.int64)
    old_p = np.empty((n, max_cand))
    old_n = np.zeros(n, dtype=np.int64)

    for _ in range(iters):
        new_n[:] = 0
        old_n[:] = 0
        for i in range(n):
            for s in range(k):
                j = ind[i, s]
                if j >= n:
                    continue
                p = np.random.random()
                if flags[i, s]:
                    _cand_push(new_c, new_p, new_n, i, j, p)
                    _cand_push(new_c, new_p, new_n, j, i, p)
                else:
                    _cand_push(old_c, old_p, old_n, i, j, p)
                    _cand_push(old_c, old_p, old_n, j, i, p)
        # sampled forward candidates become "old"
        for i in range(n):
            for s in range(k):
                j = ind[i, s]
                for t in range(new_n[i]):
                    if new_c[i, t] == j:
                        flags[i, s] = False
                        break

        updates = 0
        for i in range(n):
            for a in range(new_n[i]):
                u = new_c[i, a]
                for b in range(a + 1, new_n[i]):
                    w = new_c[i, b]
                    d = _dist(X, u, w)
                    updates += _heap_push(ind, dist, flags, u, w, d)
                    updates += _heap_push(ind, dist, flags, w, u, d)
                for b in range(old_n[i]):
                    w = old_c[i, b]
                    if w == u:
                        continue
                    d = _dist(X, u, w)
                    updates += _heap_push(ind, dist, flags, u, w, d)
                    updates += _heap_push(ind, dist, flags, w, u, d)
        if updates < delta * n * k:
            break
    return ind, dist


def knn_descent(data, k, iters=10, sample_rate=1.0, seed=0, delta=0.001):
    """Approximate kNN graph by nearest-neighbor descent.

    Starts from a random graph and repeatedly joins neighbors-of-neighbors.
    ``sample_rate`` scales the per-point candidate pool (``sample_rate * k``).
    Stops after ``iters`` rounds or when fewer than ``delta * n * k`` heap
    updates happen in a round. Returned distances are exact.
    """
    X = _as_array(data)
    n = X.shape[0]
    _check_k(n, k)
    if n <= k + 1:
        return knn_exact(X, k)
    max_cand = max(1, int(round(sample_rate * k)))
    ind, dist = _nn_descent_kernel(X, k, int(iters), max_cand, float(delta), int(seed))
    return NeighborGraph(ind, dist)


def recall(approx: NeighborGraph, exact: NeighborGraph) -> float:
    """Fraction of exact kNN edges recovered by ``approx``."""
    hits = 0
    for a, e in zip(approx.indices, exact.indices):
        hits += len(np.intersect1d(a, e, assume_unique=True))
    return hits / exact.indices.size
