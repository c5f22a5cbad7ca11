"""Command-line entry point: ``gdr {embed,sweep,theorems,bench}``.

Exit codes: 0 success, 2 configuration error, 3 numerical abort.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numba
import numpy as np

from .dataset import DataMatrix, DatasetError, load_matrix, make_blobs, make_swiss_roll
from .metrics import (
    angle_agreement,
    evaluate,
    force_ratio_experiment,
    knn_accuracy,
)
from .optimizer import (
    PRESETS, ConfigError, NumericalAbort, RunConfig, optimize, prepare, preset_config, run,
)
from .svg import write_scatter

EXIT_OK, EXIT_CONFIG, EXIT_ABORT = 0, 2, 3

log = logging.getLogger("gdr.cli")

# flag dest -> RunConfig field, for flags that map one to one
_DIRECT = {
    "normalized": "normalized",
    "init": "init",
    "pseudo_distance": "pseudo_distance",
    "symmetrization": "symmetrization",
    "sym_attraction": "sym_attraction",
    "min_dist": "min_dist",
    "spread": "spread",
    "loss": "loss",
    "epochs": "epochs",
    "lr": "lr",
    "momentum": "momentum",
    "apply": "apply",
    "k_neighbors": "k_neighbors",
    "perplexity": "perplexity",
    "dims": "d",
    "seed": "seed",
    "threads": "threads",
}


def _add_config_flags(p):
    g = p.add_argument_group("run configuration (each flag overrides the preset default)")
    g.add_argument("--preset", choices=PRESETS, default="gdr_umap",
                   help="base configuration: tsne, umap, gdr_tsne or gdr_umap")
    g.add_argument("--normalized", action=argparse.BooleanOptionalAction, default=None,
                   help="[normalization] normalize P and Q (tSNE-like) or not (UMAP-like)")
    g.add_argument("--init", choices=("random", "spectral"),
                   help="[initialization] random Gaussian or Laplacian eigenmap")
    g.add_argument("--pseudo-distance", action=argparse.BooleanOptionalAction, default=None,
                   help="[distance function] subtract each point's nearest-neighbor distance")
    g.add_argument("--symmetrization", choices=("average", "union"),
                   help="[symmetrization] (p+p')/2 or p+p'-pp'")
    g.add_argument("--sym-attraction", action=argparse.BooleanOptionalAction, default=None,
                   help="[symmetric attraction] apply each attraction to both endpoints")
    g.add_argument("--ab", choices=("unit", "fit"),
                   help="[a, b scalars] a = b = 1 or fitted from --min-dist/--spread")
    g.add_argument("--min-dist", type=float, help="[a, b scalars] min_dist of the a/b fit")
    g.add_argument("--spread", type=float, help="[a, b scalars] spread of the a/b fit")
    g.add_argument("--sampling", choices=("scalar", "per-edge"),
                   help="[edge sampling] frequency-proportional (scalar) or every edge")
    g.add_argument("--accelerated", action="store_true", default=None,
                   help="[edge sampling] explicit weights plus frequency sampling")
    g.add_argument("--neg-samples", type=int, help="[repulsion sampling] negatives per attraction")
    g.add_argument("--loss", choices=("kl", "frobenius"), help="[loss] KL divergence or Frobenius")
    g.add_argument("--epochs", type=int, help="[optimizer] number of epochs")
    g.add_argument("--lr", type=float, help="[optimizer] base learning rate")
    g.add_argument("--apply", choices=("immediate", "batched"),
                   help="[gradient application] move points per edge or step once per epoch")
    g.add_argument("--lr-schedule", choices=("constant", "linear-decay"),
                   help="[optimizer] learning-rate schedule over the epochs")
    g.add_argument("--momentum", type=float,
                   help="[gradient amplification] constant momentum (default: 0.5 then 0.9)")
    g.add_argument("--k-neighbors", type=int, help="[kNN graph] neighbors per point")
    g.add_argument("--perplexity", type=float, help="[Gaussian kernel] target perplexity")
    g.add_argument("--dims", type=int, help="output dimensions (1-3)")
    g.add_argument("--seed", type=int, default=0, help="random seed")
    g.add_argument("--threads", type=int, help="numba worker threads")
    g.add_argument("--unsafe-normalized-scalar-sampling", action="store_true",
                   help="[normalization] allow the divergent normalized UMAP configuration "
                        "(scalar sampling with repulsions divided by 1 - mean p)")


def _add_input_flags(p):
    g = p.add_argument_group("input")
    g.add_argument("--input", help="data file")
    g.add_argument("--format", choices=("csv", "bin"), default="csv", help="input file format")
    g.add_argument("--header", action="store_true", help="csv has a header row")
    g.add_argument("--labels", action="store_true", help="csv last column holds labels")
    g.add_argument("--synthetic",
                   help="synthetic data, e.g. blobs:n=1000,clusters=5 or swiss_roll:n=2000")
    g.add_argument("--out-dir", default=".", help="output directory")


def build_parser():
    parser = argparse.ArgumentParser(prog="gdr", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    embed = sub.add_parser("embed", help="embed one dataset")
    _add_config_flags(embed)
    _add_input_flags(embed)

    sweep = sub.add_parser("sweep", help="single-toggle ablation over all presets")
    _add_config_flags(sweep)
    _add_input_flags(sweep)
    sweep.add_argument("--parallel-cells", action="store_true", help="run cells in processes")

    th = sub.add_parser("theorems", help="Monte-Carlo checks of the force-ratio results")
    th.add_argument("--sizes", default="100,1000,5000", help="comma-separated n values")
    th.add_argument("--draws", type=int, default=100_000)
    th.add_argument("--c", type=int, default=15, help="attractions per point")
    th.add_argument("--angle-points", type=int, default=500,
                    help="cloud size for the angle diagnostic")
    th.add_argument("--seed", type=int, default=0)
    th.add_argument("--out-dir", default=".")

    bench = sub.add_parser("bench", help="per-epoch timings")
    bench.add_argument("--sizes", default="1000,10000,50000", help="comma-separated n values")
    bench.add_argument("--epochs", type=int, default=30, help="timed epochs per run")
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--threads", type=int)
    bench.add_argument("--out-dir", default=".")
    return parser


def parse_synthetic(spec: str, seed=0) -> DataMatrix:
    name, _, rest = spec.partition(":")
    kw = {}
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        if not val:
            raise ConfigError(f"bad synthetic parameter {item!r}")
        try:
            num = float(val)
        except ValueError as exc:
            raise ConfigError(f"bad synthetic parameter {item!r}") from exc
        kw[key.strip()] = int(num) if num.is_integer() and key.strip() != "noise" else num
    kw.setdefault("seed", seed)
    try:
        if name == "blobs":
            return make_blobs(**kw)
        if name == "swiss_roll":
            return make_swiss_roll(**kw)
    except TypeError as exc:
        raise ConfigError(f"bad synthetic parameters: {exc}") from exc
    raise ConfigError(f"unknown synthetic dataset {name!r} (use blobs or swiss_roll)")


def load_input(args) -> DataMatrix:
    if bool(args.input) == bool(args.synthetic):
        raise ConfigError("give exactly one of --input or --synthetic")
    if args.synthetic:
        return parse_synthetic(args.synthetic, args.seed)
    return load_matrix(args.input, args.format, has_header=args.header, label_column=args.labels)


def config_from_args(args) -> RunConfig:
    """Preset defaults overridden by the given flags, validated before any compute."""
    over = {}
    for dest, name in _DIRECT.items():
        val = getattr(args, dest, None)
        if val is not None:
            over[name] = val
    if args.ab is not None:
        over["ab_mode"] = "fitted" if args.ab == "fit" else "unit"
    if args.lr_schedule is not None:
        over["lr_schedule"] = args.lr_schedule.replace("-", "_")
    if args.unsafe_normalized_scalar_sampling:
        over["unsafe_normalized_scalar_sampling"] = True
    unsafe = {k: over.pop(k) for k in ["unsafe_normalized_scalar_sampling"] if k in over}
    cfg = replace(preset_config(args.preset, seed=args.seed, **unsafe), **over)
    sampling = cfg.sampling
    if args.sampling is not None:
        sampling = replace(sampling, mode="scalar_sampling" if args.sampling == "scalar"
                           else "per_edge")
    if args.accelerated:
        sampling = replace(sampling, accelerated=True)
    if args.neg_samples is not None:
        if args.neg_samples < 1:
            raise ConfigError("--neg-samples must be >= 1")
        sampling = replace(sampling, neg_samples=args.neg_samples)
    cfg = replace(cfg, sampling=sampling)
    try:
        cfg.resolved()
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def _write_embedding(path, Y, labels):
    d = Y.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        header = ["x", "y", "z"][:d] + (["label"] if labels is not None else [])
        w.writerow(header)
        for i in range(len(Y)):
            row = [repr(float(v)) for v in Y[i]]
            if labels is not None:
                row.append(int(labels[i]))
            w.writerow(row)


def _json_dump(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def cmd_embed(args) -> int:
    cfg = config_from_args(args)
    data = load_input(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        state, report = run(data, cfg)
    except NumericalAbort as exc:
        _json_dump({"run": exc.report.to_dict(), "metrics": None, "error": str(exc)},
                   out / "report.json")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    metrics = evaluate(state.Y, data, seed=cfg.seed)
    _write_embedding(out / "embedding.csv", state.Y, data.labels)
    _json_dump({"run": report.to_dict(), "metrics": metrics.to_dict()}, out / "report.json")
    write_scatter(out / "plot.svg", state.Y, data.labels, title=cfg.preset)
    return EXIT_OK


TOGGLES = ("default", "init", "pseudo_distance", "symmetrization", "sym_attraction", "ab")


def toggled(cfg: RunConfig, name: str) -> RunConfig:
    """``cfg`` with one hyperparameter switched to its alternative."""
    if name == "default":
        return cfg
    if name == "init":
        return replace(cfg, init="random" if cfg.init == "spectral" else "spectral")
    if name == "pseudo_distance":
        return replace(cfg, pseudo_distance=not cfg.pseudo_distance)
    if name == "symmetrization":
        return replace(cfg, symmetrization="average" if cfg.symmetrization == "union"
                       else "union")
    if name == "sym_attraction":
        return replace(cfg, sym_attraction=not cfg.sym_attraction)
    if name == "ab":
        return replace(cfg, ab_mode="unit" if cfg.ab_mode == "fitted" else "fitted")
    raise ValueError(name)


def _sweep_cell(job):
    preset, toggle, cfg, data, plot_path = job
    t0 = time.perf_counter()
    try:
        state, _ = run(data, cfg)
    except (NumericalAbort, ConfigError) as exc:
        return {"preset": preset, "toggle": toggle, "status": "failed", "error": str(exc)}
    m = evaluate(state.Y, data, seed=cfg.seed)
    if plot_path:
        write_scatter(plot_path, state.Y, data.labels, title=f"{preset} {toggle}")
    return {"preset": preset, "toggle": toggle, "status": "ok",
            "knn_accuracy": m.knn_accuracy, "v_measure": m.v_measure,
            "spread_ratio": m.spread_ratio, "manifold_rho": m.manifold_rho,
            "seconds": time.perf_counter() - t0}


def sweep_cells(data, overrides=None, seed=0, plot_dir=None, parallel=False):
    """Run every (preset, toggle) cell; returns the list of cell dicts."""
    overrides = overrides or {}
    jobs = []
    for preset in PRESETS:
        base = preset_config(preset, seed=seed, **overrides)
        for t in TOGGLES:
            plot = str(Path(plot_dir) / f"{preset}_{t}.svg") if plot_dir else None
            jobs.append((preset, t, toggled(base, t), data, plot))
    if parallel:
        with ProcessPoolExecutor() as pool:
            return list(pool.map(_sweep_cell, jobs))
    return [_sweep_cell(j) for j in jobs]


def summarize_sweep(cells):
    rows = {}
    for c in cells:
        rows.setdefault(c["preset"], {})[c["toggle"]] = c
    summary = {"max_knn_delta": {}, "max_v_delta": {}}
    for preset, row in rows.items():
        base = row.get("default", {})
        if base.get("status") != "ok":
            continue
        dk = [abs(c["knn_accuracy"] - base["knn_accuracy"]) for c in row.values()
              if c.get("status") == "ok"]
        dv = [abs(c["v_measure"] - base["v_measure"]) for c in row.values()
              if c.get("status") == "ok"]
        summary["max_knn_delta"][preset] = max(dk)
        summary["max_v_delta"][preset] = max(dv)
    try:
        su = rows["gdr_umap"]["default"]["spread_ratio"]
        st = rows["gdr_tsne"]["default"]["spread_ratio"]
        summary["normalization_spread"] = {"gdr_umap": su, "gdr_tsne": st,
                                           "ratio": su / st if st else math.inf}
    except (KeyError, TypeError):
        pass
    return summary


def cmd_sweep(args) -> int:
    config_from_args(args)
    data = load_input(args)
    out = Path(args.out_dir)
    plots = out / "sweep_plots"
    plots.mkdir(parents=True, exist_ok=True)
    over = {name: getattr(args, dest) for dest, name in
            (("epochs", "epochs"), ("k_neighbors", "k_neighbors"), ("dims", "d"),
             ("threads", "threads"), ("perplexity", "perplexity"))
            if getattr(args, dest) is not None}
    cells = sweep_cells(data, over, args.seed, plots, args.parallel_cells)
    _json_dump({"toggles": TOGGLES, "presets": PRESETS, "cells": cells,
                "summary": summarize_sweep(cells)}, out / "sweep_report.json")
    return EXIT_OK


def angle_during_run(n, seed=0, epochs=None, every=50, trials=100, dim=10, c=5):
    """Angle agreement traced along a gdr_tsne run on a standard Gaussian cloud.

    Each of the ``c`` sampled estimates draws as many negatives as a point
    receives in one per-edge epoch (its mean degree in the affinity graph).
    Returns ``(mean, trace, samples)``.
    """
    rng = np.random.default_rng(seed)
    data = DataMatrix(rng.normal(size=(n, dim)))
    cfg = preset_config("gdr_tsne", seed=seed, loss_every=0)
    if epochs is not None:
        cfg = replace(cfg, epochs=epochs)
    prep = prepare(data, cfg)
    samples = max(1, int(round(2 * prep.P.n_edges / n)))
    angles = []

    def cb(state, epoch):
        if (epoch + 1) % every == 0:
            angles.append(angle_agreement(state.Y, prep.ab, trials=trials,
                                          seed=seed + epoch, c=c, samples=samples))

    optimize(prep, cb)
    return float(np.mean(angles)), angles, samples


def theorem_report(sizes, draws=100_000, c=15, seed=0, angle_points=500):
    rows = []
    for n in sizes:
        r = force_ratio_experiment(n, c=c, seed=seed, draws=draws)
        rows.append({
            **r.to_dict(),
            "equality": r.equality,
            "sampling_invariant": bool(0.9 <= r.equality <= 1.1),
            "closed_form_stated_ok": bool(
                abs(r.ratio_full / r.closed_form_stated - 1) <= 0.1
                and abs(r.ratio_sampled / r.closed_form_stated - 1) <= 0.1),
            "closed_form_algebra_ok": bool(
                abs(r.ratio_full / r.closed_form_algebra - 1) <= 0.1
                and abs(r.ratio_sampled / r.closed_form_algebra - 1) <= 0.1),
            "unnormalized_below_sampled": bool(r.ratio_unnorm < r.ratio_sampled),
            "umap_p_below_bound": bool(r.p_umap < 1.0 / (n * n + 1)),
        })
    angle_mean, trace, samples = angle_during_run(angle_points, seed)
    return {
        "sizes": list(sizes), "draws": draws, "c": c, "seed": seed,
        "force_ratios": rows,
        "angle": {"n": angle_points, "samples": samples, "mean": angle_mean, "trace": trace,
                  "ok": bool(angle_mean < 0.5)},
    }


def cmd_theorems(args) -> int:
    sizes = [int(s) for s in args.sizes.split(",")]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rep = theorem_report(sizes, args.draws, args.c, args.seed, args.angle_points)
    _json_dump(rep, out / "theorem_report.json")
    return EXIT_OK


BENCH_CONFIGS = {
    "gdr_umap": dict(preset="gdr_umap"),
    "gdr_umap_accelerated": dict(preset="gdr_umap", accelerated=True),
    "gdr_tsne": dict(preset="gdr_tsne"),
}


def bench_one(data, name, epochs, seed=0, accuracy=False):
    """Median per-epoch wall time of ``epochs`` epochs (plus kNN accuracy)."""
    kw = dict(BENCH_CONFIGS[name])
    preset = kw.pop("preset")
    cfg = preset_config(preset, seed=seed, loss_every=0, epochs=epochs, **kw)
    state, report = run(data, cfg)
    # the first epoch includes JIT warm-up
    times = report.epoch_times[1:] if len(report.epoch_times) > 1 else report.epoch_times
    out = {"per_epoch_seconds": float(np.median(times)), "epochs_timed": len(times),
           "optimize_seconds": report.timings["optimize"]}
    if accuracy and data.labels is not None:
        out["knn_accuracy"] = knn_accuracy(state.Y, data.labels)
    return out


def cmd_bench(args) -> int:
    if args.threads:
        numba.set_num_threads(min(args.threads, numba.config.NUMBA_NUM_THREADS))
    sizes = [int(float(s)) for s in args.sizes.split(",")]
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for n in sizes:
        data = make_blobs(n, clusters=10, dim=10, sep=10.0, seed=args.seed)
        for name in BENCH_CONFIGS:
            rows.append({"n": n, "config": name, **bench_one(data, name, args.epochs, args.seed)})
    by = {(r["n"], r["config"]): r["per_epoch_seconds"] for r in rows}
    checks = {}
    if sizes:
        nmax = max(sizes)
        checks["accelerated_over_plain"] = (by[(nmax, "gdr_umap_accelerated")]
                                            / by[(nmax, "gdr_umap")])
    if 1000 in sizes and 10000 in sizes:
        checks["scaling_1e4_over_1e3"] = by[(10000, "gdr_umap")] / by[(1000, "gdr_umap")]
    _json_dump({"threads": numba.get_num_threads(), "seed": args.seed, "epochs": args.epochs,
                "rows": rows, "checks": checks}, out / "bench_report.json")
    return EXIT_OK


COMMANDS = {"embed": cmd_embed, "sweep": cmd_sweep, "theorems": cmd_theorems,
            "bench": cmd_bench}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
