"""Masked datasets: feature values paired with an explicit missingness matrix.

A value X[i, j] is only meaningful when M[i, j] == 0. Missing positions keep
whatever number is stored there (no NaN sentinel); all semantics flow from M.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np


class DatasetError(ValueError):
    """Raised when a dataset violates its structural contract."""


@dataclass(frozen=True)
class MaskedDataset:
    """Feature matrix X, binary missingness matrix M (1 = missing), targets y."""

    X: np.ndarray
    M: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "X", np.asarray(self.X, dtype=float))
        object.__setattr__(self, "M", np.asarray(self.M, dtype=np.int8))
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        self.X.setflags(write=False)
        self.M.setflags(write=False)
        self.y.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def subset(self, rows) -> "MaskedDataset":
        rows = np.asarray(rows)
        return MaskedDataset(self.X[rows], self.M[rows], self.y[rows],
                             self.feature_names)


@dataclass(frozen=True)
class PatternKey:
    """Hashable identifier for one missingness pattern."""

    bits: tuple[int, ...]

    @classmethod
    def from_row(cls, m_row) -> "PatternKey":
        return cls(tuple(int(v) for v in m_row))


def masked_dot(w, x, m) -> float:
    """Inner product of w and x restricted to observed coordinates (m == 0)."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    m = np.asarray(m)
    if not (w.shape == x.shape == m.shape):
        raise DatasetError(
            f"length mismatch: w{w.shape}, x{x.shape}, m{m.shape}")
    return float(np.sum(w * (1 - m) * x))


def validate(dataset: MaskedDataset) -> None:
    """Check shape agreement, binary M, and finiteness of observed entries.

    Raises DatasetError naming the first offending cell. NaN/inf at missing
    positions is fine: those entries are semantically undefined.
    """
    X, M, y = dataset.X, dataset.M, dataset.y
    if X.ndim != 2 or M.ndim != 2:
        raise DatasetError("X and M must be 2-dimensional")
    if X.shape != M.shape:
        raise DatasetError(f"X shape {X.shape} != M shape {M.shape}")
    if y.ndim != 1 or y.shape[0] != X.shape[0]:
        raise DatasetError(
            f"y length {y.shape} does not match {X.shape[0]} rows")
    bad = np.argwhere((M != 0) & (M != 1))
    if bad.size:
        i, j = bad[0]
        raise DatasetError(f"M[{i}][{j}] is not binary")
    observed_bad = np.argwhere(~np.isfinite(X) & (M == 0))
    if observed_bad.size:
        i, j = observed_bad[0]
        raise DatasetError(f"non-finite observed value at X[{i}][{j}]")
    if not np.all(np.isfinite(y)):
        i = int(np.flatnonzero(~np.isfinite(y))[0])
        raise DatasetError(f"non-finite target y[{i}]")
    if dataset.feature_names is not None and len(dataset.feature_names) != X.shape[1]:
        raise DatasetError("feature_names length does not match column count")


def unique_patterns(dataset: MaskedDataset) -> list[tuple[PatternKey, list[int]]]:
    """Group row indices by missingness pattern, in order of first appearance."""
    groups: dict[PatternKey, list[int]] = {}
    for i in range(dataset.n):
        key = PatternKey.from_row(dataset.M[i])
        groups.setdefault(key, []).append(i)
    return list(groups.items())


MISSING_TOKENS = ("", "NA")


def read_csv(path, target: str) -> MaskedDataset:
    """Load a MaskedDataset from CSV. Empty cells and `NA` become missing.

    The header row is required; `target` names the y column. Missing targets
    are not allowed.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if target not in header:
            raise DatasetError(f"target column {target!r} not in header")
        t_idx = header.index(target)
        feat_idx = [j for j in range(len(header)) if j != t_idx]
        X_rows, M_rows, y_vals = [], [], []
        for row in reader:
            if not row:
                continue
            if row[t_idx] in MISSING_TOKENS:
                raise DatasetError(f"missing target value in row {len(y_vals)}")
            y_vals.append(float(row[t_idx]))
            xs, ms = [], []
            for j in feat_idx:
                if row[j] in MISSING_TOKENS:
                    xs.append(0.0)
                    ms.append(1)
                else:
                    xs.append(float(row[j]))
                    ms.append(0)
            X_rows.append(xs)
            M_rows.append(ms)
    names = tuple(header[j] for j in feat_idx)
    ds = MaskedDataset(np.array(X_rows), np.array(M_rows), np.array(y_vals), names)
    validate(ds)
    return ds


def write_csv(dataset: MaskedDataset, path, target: str = "y") -> None:
    """Write a MaskedDataset to CSV, encoding missing entries as `NA`."""
    names = dataset.feature_names or tuple(f"x{j+1}" for j in range(dataset.d))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + [target])
        for i in range(dataset.n):
            row = ["NA" if dataset.M[i, j] else repr(float(dataset.X[i, j]))
                   for j in range(dataset.d)]
            row.append(repr(float(dataset.y[i])))
            writer.writerow(row)
