"""Independent reference implementations used as test oracles.

Each oracle is written from the defining formula with plain loops and no
code shared with the package, so agreement is evidence rather than
tautology.
"""

import math

import numpy as np


def knn_double_loop(X, k):
    """Exact kNN by explicit double loop; ties go to the lower index."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    ind = np.empty((n, k), dtype=np.int64)
    dist = np.empty((n, k))
    for i in range(n):
        cands = []
        for j in range(n):
            if j != i:
                cands.append((math.sqrt(float(((X[i] - X[j]) ** 2).sum())), j))
        cands.sort()
        for r in range(k):
            dist[i, r], ind[i, r] = cands[r]
    return ind, dist


def perplexity_of(distances, sigma):
    """2**H of p_j proportional to exp(-d_j^2 / (2 sigma^2))."""
    w = [math.exp(-(d * d) / (2.0 * sigma * sigma)) for d in distances]
    s = sum(w)
    H = 0.0
    for x in w:
        p = x / s
        if p > 0:
            H -= p * math.log2(p)
    return 2.0 ** H


def sigma_bisection(distances, perplexity, lo=1e-6, hi=1e6, iters=400):
    """Plain-space bisection on sigma (perplexity increases with sigma)."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if perplexity_of(distances, mid) < perplexity:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def tau_bisection(distances, rho, target, lo=1e-6, hi=1e6, iters=400):
    """Plain-space bisection of sum exp(-max(0, d - rho) / tau) = target."""
    def total(tau):
        return sum(math.exp(-max(0.0, d - rho) / tau) for d in distances)

    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if total(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def symmetrize_dense(Pd, mode):
    """Elementwise S(P, P^T) on a dense directed matrix."""
    n = len(Pd)
    S = np.zeros_like(Pd)
    for i in range(n):
        for j in range(n):
            a, b = Pd[i, j], Pd[j, i]
            S[i, j] = (a + b) / 2 if mode == "average" else a + b - a * b
    return S


def Z_double_loop(Y, a=1.0, b=1.0):
    n = len(Y)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                u = float(((Y[i] - Y[j]) ** 2).sum())
                total += 1.0 / (1.0 + a * u ** b)
    return total


def ab_grid_search(min_dist, spread, a_grid, b_grid):
    """Least-squares (a, b) over a grid against the offset-exponential curve."""
    x = np.linspace(0.0, 3.0 * spread, 300)
    y = np.where(x <= min_dist, 1.0, np.exp(-(x - min_dist) / spread))
    best = (np.inf, None, None)
    for a in a_grid:
        for b in b_grid:
            err = float(((1.0 / (1.0 + a * x ** (2 * b)) - y) ** 2).sum())
            if err < best[0]:
                best = (err, a, b)
    return best[1], best[2]


def kl_normalized_dense(P, Y):
    """Direct transcription with explicit loops, a = b = 1."""
    n = len(Y)
    Q = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                Q[i, j] = 1.0 / (1.0 + float(((Y[i] - Y[j]) ** 2).sum()))
    Ps, Qs = P.sum(), Q.sum()
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j and P[i, j] > 0:
                ph, qh = P[i, j] / Ps, Q[i, j] / Qs
                total += ph * math.log(ph / qh)
    return total


def kl_unnormalized_dense(P, Y, p_bar):
    n = len(Y)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            q = 1.0 / (1.0 + float(((Y[i] - Y[j]) ** 2).sum()))
            p = P[i, j] if P[i, j] > 0 else p_bar
            if p > 0:
                total += p * math.log(p / q)
            if p < 1:
                total += (1 - p) * math.log((1 - p) / (1 - q))
    return total


def frobenius_dense(P, Y):
    n = len(Y)
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                q = 1.0 / (1.0 + float(((Y[i] - Y[j]) ** 2).sum()))
                total += (P[i, j] - q) ** 2
    return total


def finite_difference(f, Y, h=1e-5):
    G = np.zeros_like(Y)
    for idx in np.ndindex(Y.shape):
        Yp, Ym = Y.copy(), Y.copy()
        Yp[idx] += h
        Ym[idx] -= h
        G[idx] = (f(Yp) - f(Ym)) / (2 * h)
    return G


def v_measure_table(labels, clusters):
    """Homogeneity, completeness, harmonic v from a contingency table."""
    cls = sorted(set(labels))
    kls = sorted(set(clusters))
    N = len(labels)
    table = [[0] * len(kls) for _ in cls]
    for a, b in zip(labels, clusters):
        table[cls.index(a)][kls.index(b)] += 1
    row = [sum(r) for r in table]
    col = [sum(table[i][j] for i in range(len(cls))) for j in range(len(kls))]

    def H(counts):
        return -sum(c / N * math.log(c / N) for c in counts if c)

    HC, HK = H(row), H(col)
    HCK = -sum(table[i][j] / N * math.log(table[i][j] / col[j])
               for i in range(len(cls)) for j in range(len(kls)) if table[i][j])
    HKC = -sum(table[i][j] / N * math.log(table[i][j] / row[i])
               for i in range(len(cls)) for j in range(len(kls)) if table[i][j])
    h = 1.0 if HC == 0 else 1 - HCK / HC
    c = 1.0 if HK == 0 else 1 - HKC / HK
    v = 0.0 if h + c == 0 else 2 * h * c / (h + c)
    return h, c, v


def knn_vote_loop(Y, labels, k):
    """Leave-one-out majority vote with explicit sorting; ties to smallest label."""
    n = len(Y)
    correct = 0
    for i in range(n):
        d = [(float(((Y[i] - Y[j]) ** 2).sum()), j) for j in range(n) if j != i]
        d.sort()
        votes = {}
        for _, j in d[:k]:
            votes[labels[j]] = votes.get(labels[j], 0) + 1
        top = max(votes.values())
        pred = min(lab for lab, v in votes.items() if v == top)
        correct += pred == labels[i]
    return 100.0 * correct / n
