"""
Tabular data handling: CSV ingestion, seeded splits with train-only
z-scoring, shuffled-label negative pairs, and the NLL/RMSE metrics.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    EmptyDatasetError,
    GenerationError,
    InvalidInputError,
    MissingColumnError,
    MissingFileError,
)
from .negcon import NegativeSet

__all__ = [
    "Standardization",
    "Dataset",
    "load_csv",
    "write_csv",
    "split_standardize",
    "shuffle_negatives",
    "metrics",
]

log = logging.getLogger(__name__)

MAX_RESAMPLE = 1000


@dataclass(frozen=True)
class Standardization:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    @classmethod
    def fit(cls, X, y):
        x_std = X.std(axis=0)
        y_std = float(y.std())
        # constant columns keep unit scale
        x_std = np.where(x_std > 0, x_std, 1.0)
        return cls(X.mean(axis=0), x_std, float(y.mean()), y_std if y_std > 0 else 1.0)

    def transform_X(self, X):
        return (X - self.x_mean) / self.x_std

    def transform_y(self, y):
        return (y - self.y_mean) / self.y_std

    def inverse_X(self, X):
        return X * self.x_std + self.x_mean

    def inverse_y(self, y):
        return y * self.y_std + self.y_mean

    def inverse_var(self, v):
        return v * self.y_std ** 2

    def as_dict(self):
        return {"x_mean": self.x_mean.tolist(), "x_std": self.x_std.tolist(),
                "y_mean": self.y_mean, "y_std": self.y_std}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["x_mean"], dtype=float),
                   np.asarray(d["x_std"], dtype=float),
                   float(d["y_mean"]), float(d["y_std"]))


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    feature_names: Optional[tuple] = None
    target_name: Optional[str] = None
    standardization: Optional[Standardization] = None
    dropped_rows: int = field(default=0, compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise InvalidInputError(
                f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise InvalidInputError("dataset contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.feature_names is not None:
            object.__setattr__(self, "feature_names", tuple(self.feature_names))

    def __len__(self):
        return self.y.shape[0]

    @property
    def d(self):
        return self.X.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return replace(self, X=self.X[idx], y=self.y[idx], dropped_rows=0)

    def destandardize(self):
        """Return the dataset in original units (no-op if never standardized)."""
        st = self.standardization
        if st is None:
            return self
        return replace(self, X=st.inverse_X(self.X), y=st.inverse_y(self.y),
                       standardization=None)


def _resolve_target(target_column, header, ncols):
    if isinstance(target_column, str) and header is not None and target_column in header:
        return header.index(target_column)
    try:
        idx = int(target_column)
    except (TypeError, ValueError):
        raise MissingColumnError(f"target column {target_column!r} not found") from None
    if idx < 0:
        idx += ncols
    if not 0 <= idx < ncols:
        raise MissingColumnError(f"target column index {target_column} out of range")
    return idx


def load_csv(path, target_column=-1, has_header=True):
    """Read a numeric CSV; rows with missing or unparsable fields are dropped.

    ``target_column`` may be a header name or a (possibly negative) index.
    The number of dropped rows is kept on ``Dataset.dropped_rows``.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    header = None
    if has_header:
        if not rows:
            raise EmptyDatasetError(f"{path} is empty")
        header = [h.strip() for h in rows[0]]
        rows = rows[1:]
    ncols = len(header) if header is not None else (len(rows[0]) if rows else 0)
    if ncols < 2:
        raise EmptyDatasetError(f"{path} needs at least two columns")
    t = _resolve_target(target_column, header, ncols)

    good, dropped = [], 0
    for r in rows:
        if len(r) != ncols:
            dropped += 1
            continue
        try:
            vals = [float(c) for c in r]
        except ValueError:
            dropped += 1
            continue
        if not all(math.isfinite(v) for v in vals):
            dropped += 1
            continue
        good.append(vals)
    if dropped:
        log.info("dropped %d malformed rows from %s", dropped, path)
    if not good:
        raise EmptyDatasetError(f"{path} has no usable rows ({dropped} dropped)")
    arr = np.array(good, dtype=float)
    feats = [j for j in range(ncols) if j != t]
    names = tuple(header[j] for j in feats) if header else None
    tname = header[t] if header else None
    return Dataset(arr[:, feats], arr[:, t], names, tname, dropped_rows=dropped)


def write_csv(data, path, target_name=None):
    """Write features then target; floats use repr so a reload is exact."""
    names = data.feature_names or tuple(f"x{j}" for j in range(data.d))
    tname = target_name or data.target_name or "y"
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(list(names) + [tname])
        for xi, yi in zip(data.X, data.y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])


def split_standardize(data, train_frac=0.8, valid_frac=0.1, seed=0):
    """Seeded train/valid/test partition with z-scoring fit on train only."""
    if not (train_frac > 0 and valid_frac > 0 and train_frac + valid_frac < 1):
        raise InvalidInputError(
            f"fractions must be positive and sum below 1 (got {train_frac}, {valid_frac})")
    n = len(data)
    perm = np.random.default_rng(seed).permutation(n)
    n_tr = int(round(train_frac * n))
    n_va = int(round(valid_frac * n))
    parts = perm[:n_tr], perm[n_tr:n_tr + n_va], perm[n_tr + n_va:]
    if any(len(p) == 0 for p in parts):
        raise InvalidInputError(f"split of n={n} leaves an empty partition")
    st = Standardization.fit(data.X[parts[0]], data.y[parts[0]])
    out = []
    for idx in parts:
        out.append(Dataset(st.transform_X(data.X[idx]), st.transform_y(data.y[idx]),
                           data.feature_names, data.target_name, st))
    return tuple(out)


def shuffle_negatives(data, m, seed=0, sigma_neg=1.0):
    """Pseudo-negative pairs: inputs paired with a label that is not their own.

    ``m`` distinct rows are chosen; each gets a label drawn from the
    dataset's label pool, redrawn until it differs from the row's true value.
    """
    n = len(data)
    if m < 0 or m > n:
        raise InvalidInputError(f"need 0 <= m <= n, got m={m}, n={n}")
    if m == 0:
        return NegativeSet.empty(data.d, sigma_neg)
    if np.unique(data.y).size < 2:
        raise InvalidInputError("all targets identical; no valid negative label exists")
    rng = np.random.default_rng(seed)
    rows = rng.choice(n, size=m, replace=False)
    labels = np.empty(m)
    for k, i in enumerate(rows):
        truth = data.y[i]
        for _ in range(MAX_RESAMPLE):
            cand = data.y[rng.integers(n)]
            if cand != truth:
                labels[k] = cand
                break
        else:
            raise GenerationError(
                f"no label different from y={truth} after {MAX_RESAMPLE} draws")
    return NegativeSet(data.X[rows], labels, sigma_neg)


def metrics(pred, truth, noise_var=0.0, original_units=False, standardization=None):
    """Mean Gaussian NLL and RMSE of a predictive distribution.

    ``noise_var`` is added to the predictive variances. With
    ``original_units`` the inverse z-score transform is applied first.
    """
    means = np.asarray(pred.means, dtype=float)
    var = np.asarray(pred.variances, dtype=float) + noise_var
    truth = np.asarray(truth, dtype=float).reshape(-1)
    if means.shape != truth.shape:
        raise InvalidInputError(
            f"length mismatch: {means.shape[0]} predictions vs {truth.shape[0]} targets")
    if original_units:
        if standardization is None:
            raise InvalidInputError("original_units needs a standardization record")
        means = standardization.inverse_y(means)
        truth = standardization.inverse_y(truth)
        var = standardization.inverse_var(var)
    resid = truth - means
    nll = float(np.mean(0.5 * (np.log(2.0 * np.pi * var) + resid ** 2 / var)))
    rmse = float(np.sqrt(np.mean(resid ** 2)))
    return nll, rmse
