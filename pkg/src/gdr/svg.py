"""Minimal SVG scatter plots (no plotting dependency)."""

from __future__ import annotations

import numpy as np

PALETTE = (
    "#1f77b4", "#aec7e8", "#ff7f0e", "#ffbb78", "#2ca02c", "#98df8a", "#d62728",
    "#ff9896", "#9467bd", "#c5b0d5", "#8c564b", "#c49c94", "#e377c2", "#f7b6d2",
    "#7f7f7f", "#c7c7c7", "#bcbd22", "#dbdb8d", "#17becf", "#9edae5",
)


def scatter_svg(Y, labels=None, size=600, radius=2.0, margin=0.05, title=None) -> str:
    """One ``<circle>`` per point; the viewBox is the data bounding box plus a margin."""
    Y = np.asarray(Y, dtype=np.float64)
    if Y.ndim != 2:
        raise ValueError("Y must be 2-D")
    xy = np.zeros((len(Y), 2))
    xy[:, : min(2, Y.shape[1])] = Y[:, :2]
    lo, hi = xy.min(axis=0), xy.max(axis=0)
    span = np.maximum(hi - lo, 1e-12)
    lo = lo - margin * span
    span = span * (1 + 2 * margin)
    # pixel space keeps the data aspect ratio
    scale = size / span.max()
    w, h = span * scale
    px = (xy[:, 0] - lo[0]) * scale
    py = h - (xy[:, 1] - lo[1]) * scale
    if labels is None:
        colors = [PALETTE[0]] * len(Y)
    else:
        _, idx = np.unique(np.asarray(labels), return_inverse=True)
        colors = [PALETTE[i % len(PALETTE)] for i in idx]
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1f}" height="{h:.1f}" '
        f'viewBox="0 0 {w:.3f} {h:.3f}">',
    ]
    if title:
        safe = title.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        out.append(f"<title>{safe}</title>")
    out.append('<rect width="100%" height="100%" fill="white"/>')
    for x, y, c in zip(px, py, colors):
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius}" fill="{c}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_scatter(path, Y, labels=None, **kw):
    with open(path, "w") as fh:
        fh.write(scatter_svg(Y, labels, **kw))
