"""Dataset container, train/test splitting, and the CSV wire format.

CSV layout: header ``f0,...,f{d-1},l[,y]``; features are written with 17
significant digits so a round trip reproduces the exact float64 bits; the
annotation flag l and the optional ground-truth class y are 0/1 integers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .models import PsychmParams

__all__ = ["Dataset", "split", "write_csv", "read_csv"]


@dataclass(frozen=True)
class Dataset:
    """Feature matrix with annotation flags and optional ground-truth classes.

    When y is present, no row may be annotated without belonging to the
    positive class (l <= y): annotated examples are always true positives.
    """

    x: np.ndarray
    l: np.ndarray
    y: np.ndarray | None = None
    true_params: PsychmParams | None = None

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        l = np.asarray(self.l)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError("x must be a non-empty 2-D matrix")
        if not np.all(np.isfinite(x)):
            raise ValueError("x must be finite")
        if l.shape != (x.shape[0],):
            raise ValueError("l must have one flag per row of x")
        if not np.isin(l, (0, 1)).all():
            raise ValueError("l must be binary")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "l", l.astype(np.int64))
        if self.y is not None:
            y = np.asarray(self.y)
            if y.shape != (x.shape[0],):
                raise ValueError("y must have one class per row of x")
            if not np.isin(y, (0, 1)).all():
                raise ValueError("y must be binary")
            y = y.astype(np.int64)
            if np.any(self.l > y):
                raise ValueError("annotated rows must be positive (l <= y)")
            object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def subset(self, indices) -> "Dataset":
        """Row selection; keeps y and generator provenance."""
        indices = np.asarray(indices)
        return replace(
            self,
            x=self.x[indices],
            l=self.l[indices],
            y=None if self.y is None else self.y[indices],
        )


def split(data: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint row partition after a seeded shuffle.

    The first part holds floor(n * fraction) rows.  Both parts keep y and
    the generator provenance.  The same seed always yields the same
    partition.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError("fraction must be in (0, 1)")
    n_first = int(data.n * fraction)
    if n_first < 1 or data.n - n_first < 1:
        raise ValueError(f"split of {data.n} rows at fraction {fraction} leaves an empty part")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    perm = rng.permutation(data.n)
    return data.subset(perm[:n_first]), data.subset(perm[n_first:])


def write_csv(data: Dataset, path) -> None:
    header = [f"f{j}" for j in range(data.dim)] + ["l"]
    if data.y is not None:
        header.append("y")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(data.n):
            row = [f"{v:.17g}" for v in data.x[i]] + [int(data.l[i])]
            if data.y is not None:
                row.append(int(data.y[i]))
            writer.writerow(row)


def read_csv(path) -> Dataset:
    """Parse a dataset CSV; malformed content reports the offending line number."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        has_y = header[-1] == "y"
        feat_names = header[:-2] if has_y else header[:-1]
        d = len(feat_names)
        expected = [f"f{j}" for j in range(d)] + ["l"] + (["y"] if has_y else [])
        if d < 1 or header != expected:
            raise ValueError(
                f"{path}: line 1: expected header f0,...,f{{d-1}},l[,y], got {','.join(header)}"
            )
        xs, ls, ys = [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(
                    f"{path}: line {lineno}: expected {len(header)} fields, got {len(row)}"
                )
            try:
                xs.append([float(v) for v in row[:d]])
                ls.append(int(row[d]))
                if has_y:
                    ys.append(int(row[d + 1]))
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: unparseable value") from None
    if not xs:
        raise ValueError(f"{path}: no data rows")
    try:
        return Dataset(
            x=np.asarray(xs), l=np.asarray(ls), y=np.asarray(ys) if has_y else None
        )
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
