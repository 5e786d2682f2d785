"""Datasets: CSV ingestion/export and the synthetic benchmark generators."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io import atomic_write_text

TASKS = ("regression", "binary", "multiclass")
PROBLEMS = ("p1", "p2", "p3", "two_gaussians", "moons", "sine_ridge")


class DataError(ValueError):
    pass


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    task: str = "regression"
    feature_names: list[str] = field(default_factory=list)
    relevant_mask: np.ndarray | None = None
    target_name: str = "y"

    def __post_init__(self):
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.y = np.asarray(self.y)
        if self.task not in TASKS:
            raise DataError(f"unknown task {self.task!r}")
        n, d = self.X.shape
        if self.y.shape[0] != n:
            raise DataError(f"X has {n} rows but y has {self.y.shape[0]}")
        if self.task == "regression":
            self.y = self.y.astype(float)
        else:
            if not np.all(np.equal(np.mod(self.y, 1), 0)) or np.any(self.y < 0):
                raise DataError("class labels must be nonnegative integers")
            self.y = self.y.astype(int)
            if self.task == "binary" and self.y.max(initial=0) > 1:
                raise DataError("binary labels must be 0 or 1")
        if not self.feature_names:
            self.feature_names = [f"x{i + 1}" for i in range(d)]
        if len(self.feature_names) != d:
            raise DataError("feature_names length does not match column count")
        if self.relevant_mask is not None:
            self.relevant_mask = np.asarray(self.relevant_mask, dtype=bool)
            if self.relevant_mask.shape != (d,):
                raise DataError("relevant_mask must have one entry per feature")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def n_classes(self) -> int:
        if self.task == "regression":
            return 0
        if self.task == "binary":
            return 2
        return int(self.y.max()) + 1

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.y[idx], self.task, list(self.feature_names),
                       self.relevant_mask, self.target_name)


# -- CSV ------------------------------------------------------------------------


def _parse_float(cell: str, line: int, col: str) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"line {line}, column {col!r}: non-numeric value {cell!r}") from None
    if not math.isfinite(v):
        raise DataError(f"line {line}, column {col!r}: non-finite value {cell!r}")
    return v


def read_csv_text(text: str, target: str | None = "y", task: str = "regression") -> Dataset:
    rows = list(csv.reader(io.StringIO(text)))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError("empty file")
    header = [h.strip() for h in rows[0]]
    for h in header:
        try:
            float(h)
        except ValueError:
            continue
        raise DataError(f"line 1: expected a header row, found numeric value {h!r}")
    if target is not None and target not in header:
        raise DataError(f"target column {target!r} not found in header {header}")
    if len(rows) < 2:
        raise DataError("file has a header but no data rows")
    data = np.empty((len(rows) - 1, len(header)))
    for i, r in enumerate(rows[1:]):
        line = i + 2
        if len(r) != len(header):
            raise DataError(f"line {line}: expected {len(header)} fields, found {len(r)}")
        for j, cell in enumerate(r):
            data[i, j] = _parse_float(cell.strip(), line, header[j])
    if target is None:
        return Dataset(data, np.zeros(data.shape[0]), "regression", header, target_name="")
    t = header.index(target)
    feats = [h for k, h in enumerate(header) if k != t]
    X = np.delete(data, t, axis=1)
    return Dataset(X, data[:, t], task, feats, target_name=target)


def load_csv(path, target: str | None = "y", task: str = "regression") -> Dataset:
    """Read a numeric CSV with a header row; ``target`` names the response column."""
    return read_csv_text(Path(path).read_text(), target, task)


def format_number(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def dataset_to_csv(ds: Dataset) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(list(ds.feature_names) + [ds.target_name or "y"])
    for x, t in zip(ds.X, ds.y):
        wr.writerow([format_number(v) for v in x] + [format_number(t)])
    return buf.getvalue()


def save_csv(ds: Dataset, path) -> None:
    atomic_write_text(path, dataset_to_csv(ds))


# -- synthetic problems -----------------------------------------------------------


def _shuffled(X, y, rng):
    perm = rng.permutation(len(y))
    return X[perm], y[perm]


def gen_p1(n: int, seed: int = 0) -> Dataset:
    """Ten Gaussian features; the positive class has features 1-4 on the 9 <= r^2 <= 16 shell."""
    if n < 2:
        raise DataError("n must be at least 2")
    rng = np.random.default_rng(seed)
    n_neg, n_pos = n // 2, n - n // 2
    neg = rng.standard_normal((n_neg, 10))
    shell = np.empty((0, 4))
    while shell.shape[0] < n_pos:
        cand = rng.standard_normal((8 * n_pos, 4))
        r2 = (cand**2).sum(1)
        shell = np.vstack([shell, cand[(r2 >= 9) & (r2 <= 16)]])
    pos = np.hstack([shell[:n_pos], rng.standard_normal((n_pos, 6))])
    X = np.vstack([neg, pos])
    y = np.r_[np.zeros(n_neg, int), np.ones(n_pos, int)]
    X, y = _shuffled(X, y, rng)
    return Dataset(X, y, "binary", relevant_mask=np.arange(10) < 4)


def xor_prototypes() -> np.ndarray:
    """One hypercube corner per class; the class also owns its antipode."""
    return np.array([[a, b, 1.0] for a in (-1.0, 1.0) for b in (-1.0, 1.0)])


def xor_class(v) -> int:
    """Class index of a corner of {-1, 1}^3, grouped by (v1*v3, v2*v3)."""
    v = np.asarray(v)
    a, b = v[0] * v[2], v[1] * v[2]
    return int(2 * (a > 0) + (b > 0))


def gen_p2(n: int, seed: int = 0) -> Dataset:
    """3-D XOR as 4-way classification plus seven standard-normal noise features."""
    if n < 4:
        raise DataError("n must be at least 4")
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 4
    sign = rng.choice([-1.0, 1.0], size=n)
    means = xor_prototypes()[y] * sign[:, None]
    relevant = means + np.sqrt(0.5) * rng.standard_normal((n, 3))
    X = np.hstack([relevant, rng.standard_normal((n, 7))])
    X, y = _shuffled(X, y, rng)
    return Dataset(X, y, "multiclass", relevant_mask=np.arange(10) < 3)


def friedman(X, noise=None) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    y = (10 * np.sin(np.pi * X[:, 0] * X[:, 1]) + 20 * (X[:, 2] - 0.5) ** 2
         + 10 * X[:, 3] + 5 * X[:, 4])
    return y if noise is None else y + noise


def gen_p3(n: int, seed: int = 0, noise: float = 1.0) -> Dataset:
    if n < 2:
        raise DataError("n must be at least 2")
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, (n, 10))
    y = friedman(X, noise * rng.standard_normal(n))
    return Dataset(X, y, "regression", relevant_mask=np.arange(10) < 5)


TWO_GAUSSIAN_MEANS = np.array([[1.0, 1.0], [2.8, 2.8]])
TWO_GAUSSIAN_COV = np.array([[0.81, 0.72], [0.72, 0.66]])


def gen_toys(kind: str, n: int = 100, params: dict | None = None, seed: int = 0) -> Dataset:
    """Two-dimensional demo problems: ``two_gaussians``, ``moons``, ``sine_ridge``."""
    params = dict(params or {})
    if n < 2:
        raise DataError("n must be at least 2")
    rng = np.random.default_rng(seed)
    if kind == "two_gaussians":
        y = np.r_[np.zeros(n // 2, int), np.ones(n - n // 2, int)]
        L = np.linalg.cholesky(TWO_GAUSSIAN_COV)
        X = TWO_GAUSSIAN_MEANS[y] + rng.standard_normal((n, 2)) @ L.T
        X, y = _shuffled(X, y, rng)
        return Dataset(X, y, "binary")
    if kind == "moons":
        from sklearn.datasets import make_moons

        X, y = make_moons(n_samples=n, noise=params.get("noise", 0.1), random_state=seed)
        return Dataset(X, y, "binary")
    if kind == "sine_ridge":
        a, b = params.get("a", 0.5), params.get("b", 0.5)
        low, high = params.get("low", -5.0), params.get("high", 5.0)
        X = rng.uniform(low, high, (n, 2))
        y = np.sin(a * X[:, 0] + b * X[:, 1])
        if params.get("noise", 0.0):
            y = y + params["noise"] * rng.standard_normal(n)
        return Dataset(X, y, "regression")
    raise DataError(f"unknown toy problem {kind!r}")


def generate(problem: str, n: int, seed: int = 0, **params) -> Dataset:
    if problem == "p1":
        return gen_p1(n, seed)
    if problem == "p2":
        return gen_p2(n, seed)
    if problem == "p3":
        return gen_p3(n, seed, params.get("noise", 1.0))
    if problem in ("two_gaussians", "moons", "sine_ridge"):
        return gen_toys(problem, n, params, seed)
    raise DataError(f"unknown problem {problem!r}; choose from {PROBLEMS}")
