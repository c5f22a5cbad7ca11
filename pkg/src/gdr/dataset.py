"""Input data: loading from disk and synthetic benchmark generators."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"GDRM"
_HEADER = struct.Struct("<4sQQB")


class DatasetError(ValueError):
    """Raised for malformed or invalid input data."""


@dataclass(frozen=True)
class DataMatrix:
    """An ``n x dim`` real matrix with optional integer class labels.

    ``manifold_param`` carries a per-point scalar for generators that know the
    intrinsic coordinate of each point (the swiss roll angle).
    """

    values: np.ndarray
    labels: np.ndarray | None = None
    manifold_param: np.ndarray | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise DatasetError(f"values must be 2-D, got shape {values.shape}")
        if values.shape[0] < 2 or values.shape[1] < 1:
            raise DatasetError(f"need n >= 2 and dim >= 1, got shape {values.shape}")
        bad = np.argwhere(~np.isfinite(values))
        if len(bad):
            r, c = bad[0]
            raise DatasetError(f"non-finite value at row {r}, column {c}")
        object.__setattr__(self, "values", values)
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (values.shape[0],):
                raise DatasetError(
                    f"labels must have length {values.shape[0]}, got {labels.shape}"
                )
            object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def _encode_labels(raw):
    """Map label strings to ints; numeric labels keep their value."""
    try:
        as_float = [float(s) for s in raw]
        if all(f == int(f) for f in as_float):
            return np.array([int(f) for f in as_float], dtype=np.int64)
    except ValueError:
        pass
    mapping = {s: i for i, s in enumerate(sorted(set(raw)))}
    return np.array([mapping[s] for s in raw], dtype=np.int64)


def _load_csv(path, has_header, label_column):
    rows = []
    raw_labels = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for row_idx, row in enumerate(reader):
            if row_idx == 0 and has_header:
                continue
            if not row or all(not cell.strip() for cell in row):
                continue
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DatasetError(
                    f"{path}: row {row_idx} has {len(row)} fields, expected {width}"
                )
            if label_column:
                raw_labels.append(row[-1].strip())
                row = row[:-1]
            try:
                vals = [float(cell) for cell in row]
            except ValueError as exc:
                raise DatasetError(f"{path}: row {row_idx}: {exc}") from None
            for col, v in enumerate(vals):
                if not np.isfinite(v):
                    raise DatasetError(
                        f"{path}: non-finite value at row {row_idx}, column {col}"
                    )
            rows.append(vals)
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    labels = _encode_labels(raw_labels) if label_column else None
    return DataMatrix(np.array(rows, dtype=np.float64), labels)


def _load_binary(path):
    blob = Path(path).read_bytes()
    if len(blob) < _HEADER.size:
        raise DatasetError(f"{path}: file too short for header")
    magic, n, dim, has_labels = _HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DatasetError(f"{path}: bad magic {magic!r}")
    n_values = n * dim
    expected = _HEADER.size + 4 * n_values + (8 * n if has_labels else 0)
    if len(blob) != expected:
        raise DatasetError(f"{path}: expected {expected} bytes, found {len(blob)}")
    offset = _HEADER.size
    values = np.frombuffer(blob, dtype="<f4", count=n_values, offset=offset)
    values = values.reshape(n, dim)
    labels = None
    if has_labels:
        labels = np.frombuffer(blob, dtype="<i8", count=n, offset=offset + 4 * n_values)
    return DataMatrix(values.astype(np.float64), labels)


def load_matrix(path, format="csv", *, has_header=False, label_column=False):
    """Read a data matrix from ``path``.

    Parameters
    ----------
    path : str or Path
    format : {"csv", "bin"}
        ``"bin"`` (alias ``"f32-binary"``) is the little-endian float32 format
        written by :func:`save_matrix`.
    has_header : bool
        CSV only; skip the first row.
    label_column : bool
        CSV only; treat the last column as class labels. Non-integer labels
        are mapped to ints by sorted order.
    """
    if format == "csv":
        return _load_csv(path, has_header, label_column)
    if format in ("bin", "f32-binary"):
        return _load_binary(path)
    raise DatasetError(f"unknown format {format!r}")


def save_matrix(data: DataMatrix, path, format="bin"):
    if format in ("bin", "f32-binary"):
        has_labels = data.labels is not None
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, data.n, data.dim, int(has_labels)))
            fh.write(np.ascontiguousarray(data.values, dtype="<f4").tobytes())
            if has_labels:
                fh.write(np.ascontiguousarray(data.labels, dtype="<i8").tobytes())
    elif format == "csv":
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            for i, row in enumerate(data.values):
                cells = [repr(float(v)) for v in row]
                if data.labels is not None:
                    cells.append(str(int(data.labels[i])))
                writer.writerow(cells)
    else:
        raise DatasetError(f"unknown format {format!r}")


def make_swiss_roll(n, noise=0.0, seed=0):
    """Sample ``n`` points from the classic swiss roll in R^3.

    The angle ``t`` is uniform on [1.5 pi, 4.5 pi] and the height uniform on
    [0, 21]; point = (t cos t, h, t sin t) + N(0, noise^2 I). ``t`` is returned
    in ``manifold_param``.
    """
    if n < 2:
        raise DatasetError("n must be >= 2")
    if noise < 0:
        raise DatasetError("noise must be >= 0")
    rng = np.random.default_rng(seed)
    t = 1.5 * np.pi * (1.0 + 2.0 * rng.random(n))
    h = 21.0 * rng.random(n)
    values = np.column_stack([t * np.cos(t), h, t * np.sin(t)])
    if noise > 0:
        values = values + noise * rng.standard_normal(values.shape)
    return DataMatrix(values, None, t)


def _blob_centers(clusters, dim, sep, rng):
    if clusters == 1:
        return np.zeros((1, dim))
    side = sep * max(2.0, 2.0 * clusters ** (1.0 / dim))
    for _ in range(200):
        centers = np.empty((0, dim))
        for _ in range(1000):
            c = rng.uniform(0.0, side, size=dim)
            if len(centers) == 0 or np.min(np.linalg.norm(centers - c, axis=1)) >= sep:
                centers = np.vstack([centers, c])
                if len(centers) == clusters:
                    return centers
        side *= 1.5
    raise DatasetError("could not place blob centers")  # pragma: no cover


def make_blobs(n, clusters=5, dim=10, sep=10.0, seed=0, std=1.0):
    """Isotropic Gaussian clusters with (near) equal sizes and labels.

    Centers are pairwise at least ``sep`` apart; each cluster has standard
    deviation ``std`` per coordinate.
    """
    if clusters < 1:
        raise DatasetError("clusters must be >= 1")
    if sep <= 0:
        raise DatasetError("sep must be > 0")
    if n < 2:
        raise DatasetError("n must be >= 2")
    rng = np.random.default_rng(seed)
    centers = _blob_centers(clusters, dim, sep, rng)
    labels = rng.permutation(np.arange(n) % clusters)
    values = centers[labels] + std * rng.standard_normal((n, dim))
    return DataMatrix(values, labels)
