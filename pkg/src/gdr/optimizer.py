"""The embedding optimizer: initialization, the epoch loop and the presets.

One engine covers all four presets. Per epoch it walks the directed edges of
the affinity graph, applies an attraction for each scheduled edge and a
repulsion for each sampled negative, then either moves the points
immediately (``apply="immediate"``) or collects the forces and takes one
momentum + gains step (``apply="batched"``).

Forces are accumulated with the per-pair conventions of :mod:`gdr.gradients`;
the batched step treats ``-sum(forces)`` as the gradient, the overall
positive constant being absorbed by the learning rate.
"""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numba
import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.csgraph
import scipy.sparse.linalg

from .affinity import AffinityGraph, build_affinities
from .dataset import DataMatrix
from .gradients import CLIP, DEFAULT_EPS, GradientRegime, dense_loss
from .kernel import UNIT, ABParams, fit_ab, normalization_Z, q_unnormalized
from .knn import knn_descent, knn_exact
from .sampling import SamplingPlan, exact_repulsion

log = logging.getLogger(__name__)

PRESETS = ("tsne", "umap", "gdr_tsne", "gdr_umap")
INIT_SCALE = 1e-2
GAIN_UP, GAIN_DOWN, GAIN_FLOOR = 0.2, 0.8, 0.01
MOMENTUM_SWITCH = 250
MOMENTUM_EARLY, MOMENTUM_LATE = 0.5, 0.9
FROBENIUS_LR = 0.25
Z_REFRESH = 50
Z_SMOOTHING = 0.5
DENSE_LOSS_MAX_N = 2000
DENSE_EIGH_MAX_N = 500
COORD_LIMIT = 1e6


class ConfigError(ValueError):
    """Invalid or contradictory run configuration."""


class NumericalAbort(RuntimeError):
    """Coordinates became non-finite or exceeded the magnitude guard."""

    def __init__(self, epoch, point, value):
        self.epoch, self.point, self.value = int(epoch), int(point), value
        super().__init__(f"numerical abort at epoch {epoch}, point {point} (value {value})")


@dataclass
class EmbeddingState:
    Y: np.ndarray
    velocity: np.ndarray
    gains: np.ndarray
    epoch: int = 0

    @classmethod
    def from_coords(cls, Y):
        Y = np.ascontiguousarray(Y, dtype=np.float64)
        return cls(Y, np.zeros_like(Y), np.ones_like(Y), 0)

    @property
    def n(self):
        return self.Y.shape[0]

    @property
    def d(self):
        return self.Y.shape[1]

    def copy(self):
        return EmbeddingState(self.Y.copy(), self.velocity.copy(), self.gains.copy(), self.epoch)


@dataclass(frozen=True)
class RunConfig:
    """Every switch of the engine.

    ``None`` for ``lr``, ``momentum``, ``epochs``, ``k_neighbors`` and
    ``knn`` means "use the preset's default" (resolved by :meth:`resolved`).
    ``momentum=None`` in batched mode is the two-phase 0.5 / 0.9 schedule.
    """

    preset: str = "gdr_umap"
    normalized: bool = False
    init: str = "spectral"
    pseudo_distance: bool = True
    symmetrization: str = "union"
    sym_attraction: bool = False
    ab_mode: str = "unit"
    min_dist: float = 0.1
    spread: float = 1.0
    sampling: SamplingPlan = field(default_factory=SamplingPlan)
    loss: str = "kl"
    apply: str = "batched"
    lr: float | None = None
    lr_schedule: str = "linear_decay"
    momentum: float | None = None
    gains: bool = True
    epochs: int | None = None
    seed: int = 0
    d: int = 2
    kernel: str = "umap_exponential"
    perplexity: float = 30.0
    row_normalize: bool | None = None
    k_neighbors: int | None = None
    knn: str | None = None
    repulsion: str = "sampled"
    eps: float = DEFAULT_EPS
    clip: float = CLIP
    threads: int | None = None
    loss_every: int | None = None
    unsafe_normalized_scalar_sampling: bool = False

    def regime(self) -> GradientRegime:
        return GradientRegime(self.normalized, self.loss, self.sampling.accelerated, self.eps)

    def resolved(self, n=None) -> "RunConfig":
        """Fill preset-dependent defaults and validate."""
        cfg = self
        if cfg.epochs is None:
            cfg = replace(cfg, epochs=1000 if cfg.normalized else 500)
        if cfg.k_neighbors is None:
            k = math.ceil(3 * cfg.perplexity) if cfg.kernel == "gaussian_perplexity" else 15
            cfg = replace(cfg, k_neighbors=k)
        if n is not None and cfg.k_neighbors >= n:
            cfg = replace(cfg, k_neighbors=n - 1)
        if cfg.knn is None:
            cfg = replace(cfg, knn="exact" if cfg.kernel == "gaussian_perplexity" else "descent")
        if cfg.lr is None and n is not None:
            if cfg.normalized:
                lr = n / cfg.k_neighbors
            else:
                # the Frobenius attraction is unclipped, so it gets a smaller step
                lr = FROBENIUS_LR if cfg.loss == "frobenius" else 1.0
            cfg = replace(cfg, lr=float(lr))
        validate(cfg)
        return cfg

    def to_dict(self):
        out = asdict(self)
        out["sampling"] = asdict(self.sampling)
        return out


_CHOICES = {
    "preset": PRESETS,
    "init": ("random", "spectral"),
    "symmetrization": ("average", "union"),
    "ab_mode": ("unit", "fitted"),
    "loss": ("kl", "frobenius"),
    "apply": ("immediate", "batched"),
    "lr_schedule": ("constant", "linear_decay"),
    "kernel": ("gaussian_perplexity", "umap_exponential"),
    "knn": ("exact", "descent", None),
    "repulsion": ("sampled", "exact"),
}


def validate(cfg: RunConfig):
    for name, allowed in _CHOICES.items():
        if getattr(cfg, name) not in allowed:
            raise ConfigError(f"{name}={getattr(cfg, name)!r} not in {allowed}")
    if cfg.loss == "frobenius" and cfg.normalized:
        raise ConfigError("the Frobenius loss cannot be combined with normalization")
    if cfg.d not in (1, 2, 3):
        raise ConfigError("d must be 1, 2 or 3")
    if cfg.epochs is not None and cfg.epochs < 0:
        raise ConfigError("epochs must be >= 0")
    if cfg.lr is not None and cfg.lr <= 0:
        raise ConfigError("lr must be positive")
    if cfg.momentum is not None and not 0 <= cfg.momentum < 1:
        raise ConfigError("momentum must lie in [0, 1)")
    if cfg.k_neighbors is not None and cfg.k_neighbors < 1:
        raise ConfigError("k_neighbors must be >= 1")
    if not cfg.perplexity > 1:
        raise ConfigError("perplexity must exceed 1")
    if cfg.repulsion == "exact" and cfg.apply == "immediate":
        raise ConfigError("exact repulsions need batched application")

    batched_amp = cfg.apply == "batched" and cfg.gains and cfg.momentum != 0
    unsafe = cfg.unsafe_normalized_scalar_sampling
    if cfg.preset == "tsne":
        if not (cfg.normalized and cfg.apply == "batched" and cfg.lr_schedule == "constant"
                and batched_amp):
            raise ConfigError("preset tsne requires normalized, batched, constant lr, "
                              "momentum and gains")
    elif cfg.preset == "umap":
        if cfg.normalized and not unsafe:
            raise ConfigError("preset umap is unnormalized; normalized scalar sampling "
                              "needs --unsafe-normalized-scalar-sampling")
        if not (cfg.lr_schedule == "linear_decay" and cfg.sampling.mode == "scalar_sampling"):
            raise ConfigError("preset umap requires linear-decay lr and scalar sampling")
        if not unsafe and cfg.apply != "immediate":
            raise ConfigError("preset umap requires immediate application")
        if not unsafe and cfg.momentum not in (None, 0.0):
            raise ConfigError("preset umap has no momentum")
    else:
        if cfg.apply != "batched" or cfg.sampling.mode != "per_edge":
            raise ConfigError(f"preset {cfg.preset} requires batched application and "
                              "per-edge sampling")
        if cfg.normalized != (cfg.preset == "gdr_tsne"):
            raise ConfigError(f"preset {cfg.preset} fixes normalized={cfg.preset == 'gdr_tsne'}")
    if unsafe and not (cfg.normalized and cfg.sampling.mode == "scalar_sampling"):
        raise ConfigError("the unsafe flag only applies to normalized scalar sampling")


def preset_config(name, **overrides) -> RunConfig:
    """The default configuration of a preset, with field overrides."""
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}")
    base = dict(preset=name)
    if name == "tsne":
        base.update(normalized=True, init="random", pseudo_distance=False,
                    symmetrization="average", sym_attraction=False, ab_mode="unit",
                    apply="batched", lr_schedule="constant", kernel="gaussian_perplexity",
                    sampling=SamplingPlan("per_edge", 1), repulsion="exact")
    elif name == "umap":
        base.update(normalized=False, init="spectral", pseudo_distance=True,
                    symmetrization="union", sym_attraction=True, ab_mode="fitted",
                    apply="immediate", lr_schedule="linear_decay", momentum=0.0,
                    gains=False, kernel="umap_exponential",
                    sampling=SamplingPlan("scalar_sampling", 5))
        if overrides.get("unsafe_normalized_scalar_sampling"):
            # normalized UMAP driven by momentum descent at the n/k rate
            base.update(normalized=True, apply="batched", momentum=None, gains=True)
    else:
        base.update(normalized=name == "gdr_tsne", init="spectral", pseudo_distance=True,
                    symmetrization="union", sym_attraction=False, ab_mode="unit",
                    apply="batched", lr_schedule="linear_decay", gains=False,
                    kernel="umap_exponential", sampling=SamplingPlan("per_edge", 1))
    sampling_over = {k: overrides.pop(k) for k in ("neg_samples", "accelerated")
                     if k in overrides}
    base.update(overrides)
    cfg = RunConfig(**base)
    if sampling_over:
        cfg = replace(cfg, sampling=replace(cfg.sampling, **sampling_over))
    if "seed" in overrides:
        cfg = replace(cfg, sampling=replace(cfg.sampling, seed=overrides["seed"]))
    validate(cfg)
    return cfg


# -- initialization --


def init_random(n, d=2, seed=0, scale=INIT_SCALE) -> EmbeddingState:
    if n < 2:
        raise ValueError("need n >= 2")
    rng = np.random.default_rng(seed)
    return EmbeddingState.from_coords(rng.normal(0.0, scale, size=(n, d)))


def _component_eigenvectors(W, d, seed):
    """Eigenvectors 2..d+1 of the normalized Laplacian of a connected graph."""
    m = W.shape[0]
    deg = np.asarray(W.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    Dm = scipy.sparse.diags(inv_sqrt)
    M = Dm @ W @ Dm
    if m <= DENSE_EIGH_MAX_N:
        L = np.eye(m) - M.toarray()
        _, vecs = scipy.linalg.eigh((L + L.T) / 2, subset_by_index=[0, d])
    else:
        # largest eigenpairs of D^-1/2 W D^-1/2 are the smallest of L
        v0 = np.random.default_rng(seed).uniform(0.5, 1.5, size=m)
        vals, vecs = scipy.sparse.linalg.eigsh(M, k=d + 1, which="LA", v0=v0,
                                               tol=1e-8, maxiter=20 * m)
        vecs = vecs[:, np.argsort(-vals)]
    vecs = vecs[:, 1:d + 1]
    # deterministic sign: largest-magnitude entry positive
    flip = np.sign(vecs[np.abs(vecs).argmax(axis=0), np.arange(vecs.shape[1])])
    return vecs * np.where(flip == 0, 1.0, flip)


def init_spectral(P: AffinityGraph, d=2, seed=0, scale=INIT_SCALE) -> EmbeddingState:
    """Laplacian-eigenmap initialization from the affinity graph.

    Each connected component is embedded on its own (components with at most
    ``d + 1`` points collapse onto a single location), components are laid
    out on a square grid, and the result is rescaled to stddev ``scale`` per
    dimension. Falls back to :func:`init_random` if the eigensolver fails.
    """
    n = P.n
    W = P.to_csr()
    n_comp, comp = scipy.sparse.csgraph.connected_components(W, directed=False)
    try:
        local = np.zeros((n, d))
        for c in range(n_comp):
            idx = np.flatnonzero(comp == c)
            if len(idx) <= d + 1:
                continue
            vecs = _component_eigenvectors(W[idx][:, idx], d, seed)
            span = np.abs(vecs).max()
            local[idx] = vecs / span if span > 0 else vecs
        if not np.isfinite(local).all():
            raise np.linalg.LinAlgError("non-finite eigenvectors")
    except (np.linalg.LinAlgError, scipy.sparse.linalg.ArpackError) as exc:
        log.warning("spectral initialization failed (%s); using random init", exc)
        return init_random(n, d, seed, scale)
    Y = local
    if n_comp > 1:
        side = math.ceil(math.sqrt(n_comp))
        cells = np.stack([np.arange(n_comp) % side, np.arange(n_comp) // side], axis=1)
        offsets = np.zeros((n_comp, d))
        offsets[:, : min(d, 2)] = 3.0 * cells[:, : min(d, 2)]
        Y = local + offsets[comp]
    Y = Y - Y.mean(axis=0)
    std = Y.std(axis=0)
    std[std == 0] = 1.0
    return EmbeddingState.from_coords(Y / std * scale)


# -- update rules --


def step_batched(state: EmbeddingState, grad, lr, momentum, use_gains=True) -> EmbeddingState:
    """One momentum + gains step, in place; returns ``state``."""
    if use_gains:
        differ = np.sign(grad) != np.sign(state.velocity)
        state.gains[:] = np.where(differ, state.gains + GAIN_UP, state.gains * GAIN_DOWN)
        np.maximum(state.gains, GAIN_FLOOR, out=state.gains)
        state.velocity[:] = momentum * state.velocity - lr * state.gains * grad
    else:
        state.velocity[:] = momentum * state.velocity - lr * grad
    state.Y += state.velocity
    return state


def lr_at(lr, epoch, epochs, schedule="linear_decay"):
    if schedule == "constant":
        return lr
    return lr * (1.0 - epoch / epochs)


def step_immediate(y_i, force, lr_epoch):
    """Move one point by ``lr_epoch * force`` (in place for arrays)."""
    y_i += lr_epoch * np.asarray(force)
    return y_i


# -- the epoch kernel --

_NORMALIZED, _UNNORMALIZED, _FROBENIUS = 0, 1, 2


@numba.njit(inline="always")
def _q_and_w(u, a, b):
    if b == 1.0:
        return 1.0 / (1.0 + a * u), a
    q = 1.0 / (1.0 + a * u ** b)
    return q, (a * b * u ** (b - 1.0) if u > 0 else 0.0)


@numba.njit(cache=True)
def _epoch_kernel(Y, F, heads, tails, weights, epoch, proportional, explicit_p,
                  neg_samples, mode, a, b, eps, clip, rep_mult, p_hat_scale, Z,
                  sym_attraction, sample_repulsions, immediate, lr, seed):
    """Process one epoch of edges.

    ``F`` receives the forces (batched) or is ignored (immediate, where ``Y``
    is moved in place). Returns ``(sum of q over negatives, negatives drawn)``.
    """
    np.random.seed(seed)
    n, d = Y.shape
    E = heads.shape[0]
    t = epoch + 1.0

    # repulsion weights for the normalized regime: (n - 1) / samples per head
    rep_w = np.ones(n)
    if mode == _NORMALIZED and sample_repulsions:
        cnt = np.zeros(n)
        for e in range(E):
            p = weights[e]
            if proportional and math.floor(t * p) <= math.floor((t - 1.0) * p):
                continue
            cnt[heads[e]] += neg_samples
        for i in range(n):
            if cnt[i] > 0:
                rep_w[i] = (n - 1.0) / cnt[i]

    f = np.empty(d)
    q_sum = 0.0
    drawn = 0
    for e in range(E):
        p = weights[e]
        if proportional and math.floor(t * p) <= math.floor((t - 1.0) * p):
            continue
        i = heads[e]
        j = tails[e]
        mult = p if explicit_p else 1.0

        u = 0.0
        for c in range(d):
            diff = Y[i, c] - Y[j, c]
            u += diff * diff
        q, w = _q_and_w(u, a, b)
        if mode == _NORMALIZED:
            coef = -4.0 * w * q * mult * p_hat_scale
        elif mode == _UNNORMALIZED:
            coef = -2.0 * w * q * mult
        else:
            coef = -4.0 * w * q * q * mult
        for c in range(d):
            g = coef * (Y[i, c] - Y[j, c])
            if mode == _UNNORMALIZED:
                g = min(max(g, -clip), clip)
            f[c] = g
        for c in range(d):
            if immediate:
                Y[i, c] += lr * f[c]
                if sym_attraction:
                    Y[j, c] -= lr * f[c]
            else:
                F[i, c] += f[c]
                if sym_attraction:
                    F[j, c] -= f[c]

        if not sample_repulsions:
            continue
        for _ in range(neg_samples):
            k = np.random.randint(0, n - 1)
            if k >= i:
                k += 1
            u = 0.0
            for c in range(d):
                diff = Y[i, c] - Y[k, c]
                u += diff * diff
            q, w = _q_and_w(u, a, b)
            q_sum += q
            drawn += 1
            if mode == _NORMALIZED:
                coef = 4.0 * w * q * q / Z * rep_w[i] * rep_mult
            elif mode == _UNNORMALIZED:
                coef = 2.0 * b * q / (eps + u) * rep_mult if eps + u > 0 else 0.0
            else:
                coef = 4.0 * w * q * q * q * rep_mult
            for c in range(d):
                g = coef * (Y[i, c] - Y[k, c])
                if mode == _UNNORMALIZED:
                    g = min(max(g, -clip), clip)
                if immediate:
                    Y[i, c] += lr * g
                else:
                    F[i, c] += g
    return q_sum, drawn


# -- loss bookkeeping --


def estimate_loss(P: AffinityGraph, Y, ab: ABParams, regime: GradientRegime, rng,
                  samples=20000):
    """Loss with exact edge terms and Monte-Carlo non-edge terms (large n)."""
    n = P.n
    heads, tails, w = P.directed()
    v = Y[heads] - Y[tails]
    q_e = q_unnormalized(np.einsum("ij,ij->i", v, v), ab)
    i = rng.integers(0, n, samples)
    j = rng.integers(0, n - 1, samples)
    j = j + (j >= i)
    v = Y[i] - Y[j]
    u = np.einsum("ij,ij->i", v, v)
    q_r = q_unnormalized(u, ab)
    n_pairs = n * (n - 1)
    n_non = n_pairs - len(w)
    if regime.loss == "frobenius":
        return float(np.sum((w - q_e) ** 2) + n_non * np.mean(q_r ** 2))
    if regime.normalized:
        p_hat = w / w.sum()
        Z = n_pairs * np.mean(q_r)
        return float(np.sum(p_hat * np.log(p_hat / q_e)) + np.log(Z))
    pb = P.p_mean
    one_minus_q = np.maximum(ab.a * np.power(u, ab.b) * q_r, 1e-12)
    non = pb * np.log(pb / q_r) + (1 - pb) * np.log((1 - pb) / one_minus_q)
    one_minus_qe = np.maximum(1.0 - q_e, 1e-12)
    edge = w * np.log(w / q_e)
    edge += np.where(w < 1, (1 - w) * np.log(np.maximum(1 - w, 1e-300) / one_minus_qe), 0.0)
    return float(edge.sum() + n_non * non.mean())


def loss_value(P, Y, ab, regime, rng):
    """(loss, exact?) using the dense loss when n is small enough."""
    if P.n <= DENSE_LOSS_MAX_N:
        return dense_loss(P, Y, ab, regime), True
    return estimate_loss(P, Y, ab, regime, rng), False


# -- driver --


@dataclass
class RunReport:
    config: dict
    timings: dict = field(default_factory=dict)
    loss_trace: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    n: int = 0
    n_edges: int = 0
    p_mean: float = 0.0
    ab: tuple = (1.0, 1.0)
    epoch_times: list = field(default_factory=list)
    aborted: dict | None = None

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


class _WarningCollector(logging.Handler):
    def __init__(self):
        super().__init__(logging.WARNING)
        self.messages = []

    def emit(self, record):
        self.messages.append(record.getMessage())


@dataclass
class Prepared:
    """Everything computed before the epoch loop."""

    config: RunConfig
    P: AffinityGraph
    ab: ABParams
    state: EmbeddingState
    timings: dict


def prepare(data, config: RunConfig, state: EmbeddingState | None = None) -> Prepared:
    """kNN graph, affinities, a/b and initial embedding for ``data``."""
    X = data if isinstance(data, DataMatrix) else DataMatrix(np.asarray(data))
    cfg = config.resolved(X.n)
    timings = {}
    t0 = time.perf_counter()
    if cfg.knn == "exact":
        graph = knn_exact(X, cfg.k_neighbors)
    else:
        graph = knn_descent(X, cfg.k_neighbors, seed=cfg.seed)
    timings["knn"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    P, _ = build_affinities(graph, cfg.kernel, cfg.perplexity, cfg.pseudo_distance,
                            cfg.symmetrization, cfg.row_normalize)
    ab = fit_ab(cfg.min_dist, cfg.spread) if cfg.ab_mode == "fitted" else UNIT
    timings["affinity"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if state is None:
        if cfg.init == "spectral":
            state = init_spectral(P, cfg.d, cfg.seed)
        else:
            state = init_random(X.n, cfg.d, cfg.seed)
    timings["init"] = time.perf_counter() - t0
    return Prepared(cfg, P, ab, state, timings)


def _check_finite(Y, epoch):
    bad = ~np.isfinite(Y) | (np.abs(Y) > COORD_LIMIT)
    if bad.any():
        i, c = np.argwhere(bad)[0]
        raise NumericalAbort(epoch, i, float(Y[i, c]))


def optimize(prep: Prepared, callback=None, report: RunReport | None = None):
    """Run the epoch loop on a :class:`Prepared` problem; mutates ``prep.state``."""
    cfg, P, ab, state = prep.config, prep.P, prep.ab, prep.state
    regime = cfg.regime()
    report = report or RunReport(cfg.to_dict())
    n = P.n
    heads, tails, weights = P.directed()
    heads = np.ascontiguousarray(heads, dtype=np.int64)
    tails = np.ascontiguousarray(tails, dtype=np.int64)
    weights = np.ascontiguousarray(weights)
    p_bar = P.p_mean
    plan = cfg.sampling
    proportional = plan.frequency_proportional
    explicit_p = not (plan.mode == "scalar_sampling" and not plan.accelerated)
    mode = (_FROBENIUS if cfg.loss == "frobenius"
            else _NORMALIZED if cfg.normalized else _UNNORMALIZED)
    if cfg.unsafe_normalized_scalar_sampling:
        rep_mult = 1.0 / (1.0 - p_bar)
    elif explicit_p and mode == _UNNORMALIZED:
        rep_mult = 1.0 - p_bar
    else:
        rep_mult = 1.0
    p_hat_scale = 1.0 / P.p_sum
    exact = cfg.repulsion == "exact"
    immediate = cfg.apply == "immediate"
    clip = cfg.clip if cfg.clip is not None else np.inf
    epochs = cfg.epochs
    every = cfg.loss_every if cfg.loss_every is not None else max(1, epochs // 10)
    rng = np.random.default_rng(cfg.seed + 1)
    master = np.random.SeedSequence(plan.seed)
    epoch_seeds = master.generate_state(max(epochs, 1), dtype=np.uint32)

    Z = normalization_Z(state.Y, ab) if (mode == _NORMALIZED and n <= DENSE_LOSS_MAX_N) \
        else _sampled_Z(state.Y, ab, rng)
    F = np.zeros_like(state.Y)

    def record(epoch):
        loss, is_exact = loss_value(P, state.Y, ab, regime, rng)
        report.loss_trace.append({"epoch": epoch, "loss": loss, "exact": is_exact})

    if every:
        record(state.epoch)
    t_loop = time.perf_counter()
    for epoch in range(state.epoch, epochs):
        t0 = time.perf_counter()
        lr = lr_at(cfg.lr, epoch, epochs, cfg.lr_schedule)
        if mode == _NORMALIZED and n <= DENSE_LOSS_MAX_N and epoch % Z_REFRESH == 0:
            Z = normalization_Z(state.Y, ab)
        F[:] = 0.0
        q_sum, drawn = _epoch_kernel(
            state.Y, F, heads, tails, weights, epoch, proportional, explicit_p,
            plan.neg_samples, mode, float(ab.a), float(ab.b), float(cfg.eps), float(clip),
            rep_mult, p_hat_scale, Z, cfg.sym_attraction, not exact, immediate, lr,
            int(epoch_seeds[epoch]),
        )
        if exact:
            R, Z_exact = exact_repulsion(state.Y, ab, regime, 0.0, clip)
            if mode == _NORMALIZED:
                Z = Z_exact
                F += R
            else:
                F += R * (rep_mult / n)
        elif mode == _NORMALIZED and drawn:
            Z_epoch = q_sum / drawn * n * (n - 1)
            Z = Z_SMOOTHING * Z + (1.0 - Z_SMOOTHING) * Z_epoch
        if not immediate:
            if mode == _UNNORMALIZED:
                # the summed pair forces are clipped again, as one UMAP move would be
                np.clip(F, -clip, clip, out=F)
            momentum = cfg.momentum
            if momentum is None:
                momentum = MOMENTUM_EARLY if epoch < MOMENTUM_SWITCH else MOMENTUM_LATE
            step_batched(state, -F, lr, momentum, cfg.gains)
        state.epoch = epoch + 1
        _check_finite(state.Y, epoch)
        report.epoch_times.append(time.perf_counter() - t0)
        if every and (state.epoch % every == 0 or state.epoch == epochs):
            record(state.epoch)
        if callback is not None:
            callback(state, epoch)
    report.timings["optimize"] = time.perf_counter() - t_loop
    return state, report


def _sampled_Z(Y, ab, rng, samples=20000):
    n = Y.shape[0]
    i = rng.integers(0, n, samples)
    j = rng.integers(0, n - 1, samples)
    j = j + (j >= i)
    v = Y[i] - Y[j]
    return float(np.mean(q_unnormalized(np.einsum("ij,ij->i", v, v), ab)) * n * (n - 1))


def run(data, config: RunConfig, callback=None, state: EmbeddingState | None = None):
    """Embed ``data`` end to end. Returns ``(EmbeddingState, RunReport)``.

    ``callback(state, epoch)`` is invoked after every epoch. A
    :class:`NumericalAbort` propagates after being recorded on the exception
    as ``exc.report``.
    """
    if config.threads:
        numba.set_num_threads(min(int(config.threads), numba.config.NUMBA_NUM_THREADS))
    collector = _WarningCollector()
    root = logging.getLogger("gdr")
    root.addHandler(collector)
    try:
        prep = prepare(data, config, state)
        report = RunReport(prep.config.to_dict(), dict(prep.timings), n=prep.P.n,
                           n_edges=prep.P.n_edges, p_mean=prep.P.p_mean,
                           ab=(prep.ab.a, prep.ab.b))
        try:
            state, report = optimize(prep, callback, report)
        except NumericalAbort as exc:
            report.aborted = {"epoch": exc.epoch, "point": exc.point}
            exc.report = report
            raise
        finally:
            report.warnings.extend(collector.messages)
    finally:
        root.removeHandler(collector)
    return state, report
