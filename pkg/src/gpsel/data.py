"""Training data, input standardization and the initial input ranking.

Inputs are standardized dimension by dimension onto [0, 1] through monotone
piecewise-linear maps.  In empirical mode the knots are the sorted unique
training values; their images are empirical-CDF midpoint ranks rescaled so
the smallest and largest training values map exactly to 0 and 1.  Unsampled
points therefore interpolate strictly between knot images and never collide
with a training image, while out-of-range queries clamp to the cube.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class TrainingSet:
    """Learning sample: n input rows, n outputs, d named input dimensions."""

    inputs: np.ndarray
    outputs: np.ndarray
    input_names: tuple[str, ...] = ()

    def __post_init__(self):
        inputs = np.atleast_2d(np.asarray(self.inputs, dtype=float))
        outputs = np.asarray(self.outputs, dtype=float).ravel()
        if inputs.ndim != 2:
            raise DataError("inputs must be a 2-d matrix")
        n, d = inputs.shape
        if n < 2:
            raise DataError(f"need at least 2 observations, got {n}")
        if d < 1:
            raise DataError("need at least one input dimension")
        if outputs.shape[0] != n:
            raise DataError(
                f"inputs have {n} rows but outputs have {outputs.shape[0]} entries")
        if not np.all(np.isfinite(inputs)):
            raise DataError("non-finite value in inputs")
        if not np.all(np.isfinite(outputs)):
            raise DataError("non-finite value in outputs")
        names = tuple(self.input_names) or tuple(f"x{k + 1}" for k in range(d))
        if len(names) != d:
            raise DataError(f"{len(names)} input names for {d} input columns")
        object.__setattr__(self, "inputs", _readonly(inputs))
        object.__setattr__(self, "outputs", _readonly(outputs))
        object.__setattr__(self, "input_names", names)

    @property
    def n(self) -> int:
        return self.inputs.shape[0]

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    def subset(self, idx) -> "TrainingSet":
        return TrainingSet(self.inputs[idx], self.outputs[idx], self.input_names)


@dataclass(frozen=True)
class UniformTransform:
    """Monotone piecewise-linear map from raw units onto [0, 1] (one dimension)."""

    knots_x: np.ndarray
    knots_u: np.ndarray
    mode: str = "empirical"

    def __post_init__(self):
        kx = np.asarray(self.knots_x, dtype=float)
        ku = np.asarray(self.knots_u, dtype=float)
        if kx.ndim != 1 or kx.shape != ku.shape or kx.size < 2:
            raise DataError("transform needs matching 1-d knot arrays, length >= 2")
        if np.any(np.diff(kx) <= 0):
            raise DataError("transform knot abscissae must be strictly increasing")
        if np.any(np.diff(ku) < 0):
            raise DataError("transform knot ordinates must be non-decreasing")
        if ku[0] != 0.0 or ku[-1] != 1.0:
            raise DataError("transform ordinates must span [0, 1]")
        object.__setattr__(self, "knots_x", _readonly(kx))
        object.__setattr__(self, "knots_u", _readonly(ku))

    def __call__(self, values):
        # np.interp clamps outside the knot range to the end ordinates 0 / 1
        return np.interp(values, self.knots_x, self.knots_u)


def build_uniform_transform(column: np.ndarray, mode: str = "empirical",
                            name: str = "") -> UniformTransform:
    """Fit the standardizing map for one input dimension.

    ``mode="empirical"`` uses the column itself; a known distribution is
    supplied through ``uniform_bounds_transform`` or ``quantile_table_transform``
    instead.
    """
    if mode != "empirical":
        raise ValueError(f"unknown transform mode {mode!r}")
    col = np.asarray(column, dtype=float).ravel()
    if col.size < 2 or not np.all(np.isfinite(col)):
        raise DataError(f"transform column {name or '?'} must hold >= 2 finite values")
    values, counts = np.unique(col, return_counts=True)
    if values.size < 2:
        raise DataError(f"constant input{': ' + name if name else ''}")
    n = col.size
    cum = np.cumsum(counts)
    mid = (cum - counts / 2.0) / n          # empirical-CDF midpoint ranks
    u = (mid - mid[0]) / (mid[-1] - mid[0])  # pin extremes to exactly 0 and 1
    return UniformTransform(values, u, mode="empirical")


def uniform_bounds_transform(lower: float, upper: float) -> UniformTransform:
    """Transform for an input with a known uniform distribution on [lower, upper]."""
    if not (np.isfinite(lower) and np.isfinite(upper) and lower < upper):
        raise DataError("uniform bounds must be finite with lower < upper")
    return UniformTransform(np.array([lower, upper]), np.array([0.0, 1.0]),
                            mode="known-distribution")


def quantile_table_transform(x_knots, u_knots) -> UniformTransform:
    """Transform from a user-supplied quantile table of a known distribution."""
    return UniformTransform(np.asarray(x_knots, float), np.asarray(u_knots, float),
                            mode="known-distribution")


def build_transforms(ts: TrainingSet) -> list[UniformTransform]:
    """Empirical transform per input dimension; errors name the bad input."""
    return [build_uniform_transform(ts.inputs[:, l], name=ts.input_names[l])
            for l in range(ts.d)]


def apply_transform(x_raw: np.ndarray,
                    transforms: list[UniformTransform]) -> np.ndarray:
    """Apply the per-dimension maps to one point (d,) or a batch (q, d)."""
    x = np.asarray(x_raw, dtype=float)
    d = len(transforms)
    if x.shape[-1] != d:
        raise DataError(f"point has {x.shape[-1]} coordinates, expected {d}")
    out = np.empty_like(x, dtype=float)
    for l, tr in enumerate(transforms):
        out[..., l] = tr(x[..., l])
    return out


@dataclass(frozen=True)
class InputRanking:
    """Permutation of input indices ordered by a non-increasing criterion."""

    order: tuple[int, ...]
    criterion: str
    values: tuple[float, ...] = field(default=())

    def __post_init__(self):
        d = len(self.order)
        if sorted(self.order) != list(range(d)):
            raise DataError("ranking must be a permutation of 0..d-1")

    def prefix(self, k: int) -> tuple[int, ...]:
        return self.order[:k]


def rank_by_correlation(ts: TrainingSet) -> InputRanking:
    """Rank inputs by decreasing |Pearson correlation| with the output.

    Ties break on the original input index.  A constant output has no
    defined correlation and raises; a constant input scores 0.
    """
    y = ts.outputs
    yc = y - y.mean()
    sy = float(np.sqrt(yc @ yc))
    if sy == 0.0:
        raise DataError("constant output: correlation ranking undefined")
    scores = np.empty(ts.d)
    for l in range(ts.d):
        xc = ts.inputs[:, l] - ts.inputs[:, l].mean()
        sx = float(np.sqrt(xc @ xc))
        scores[l] = 0.0 if sx == 0.0 else abs(float(xc @ yc) / (sx * sy))
    order = sorted(range(ts.d), key=lambda l: (-scores[l], l))
    return InputRanking(tuple(order), "correlation",
                        tuple(float(scores[l]) for l in order))


def load_csv(path, output_col: str) -> TrainingSet:
    """Read a training set from CSV: header row, '.' decimals, ',' separator.

    ``output_col`` names the output column; every other column is an input,
    in file order.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if output_col not in header:
            raise DataError(f"{path}: output column {output_col!r} not found "
                            f"(columns: {', '.join(header)})")
        y_pos = header.index(output_col)
        in_pos = [k for k in range(len(header)) if k != y_pos]
        if not in_pos:
            raise DataError(f"{path}: no input columns besides {output_col!r}")
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, "
                                f"got {len(rec)}")
            try:
                rows.append([float(c) for c in rec])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: {exc}") from None
    if len(rows) < 2:
        raise DataError(f"{path}: need at least 2 data rows")
    data = np.asarray(rows, dtype=float)
    return TrainingSet(data[:, in_pos], data[:, y_pos],
                       tuple(header[k] for k in in_pos))
