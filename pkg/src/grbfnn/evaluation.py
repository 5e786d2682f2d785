"""Cross-validation splitting, metrics and the hyperparameter grid search."""

from __future__ import annotations

import csv
import io
import itertools
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Dataset
from .model import Regularizers
from .training import TrainConfig, train

THREADS_ENV = "GRBFNN_THREADS"


@dataclass(frozen=True)
class CvPlan:
    n_folds: int = 5
    n_seeds: int = 20
    seeds: tuple[int, ...] | None = None
    stratify: bool = True

    def __post_init__(self):
        if self.n_folds < 2:
            raise ValueError("n_folds must be at least 2")
        if self.seeds is None:
            object.__setattr__(self, "seeds", tuple(range(self.n_seeds)))
        else:
            object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
            object.__setattr__(self, "n_seeds", len(self.seeds))


def kfold_split(n: int, n_folds: int = 5, seed: int = 0, stratify_labels=None):
    """List of ``(train_idx, test_idx)`` pairs that partition ``range(n)``."""
    from sklearn.model_selection import KFold, StratifiedKFold

    if n < n_folds:
        raise ValueError(f"cannot split {n} samples into {n_folds} folds")
    idx = np.arange(n)
    if stratify_labels is None:
        splitter = KFold(n_folds, shuffle=True, random_state=seed)
        return [(tr, te) for tr, te in splitter.split(idx)]
    labels = np.asarray(stratify_labels)
    if labels.shape[0] != n:
        raise ValueError("stratify_labels length must equal n")
    classes, counts = np.unique(labels, return_counts=True)
    if counts.min() < n_folds:
        small = classes[counts.argmin()]
        raise ValueError(f"class {small!r} has {counts.min()} members, fewer than {n_folds} folds")
    splitter = StratifiedKFold(n_folds, shuffle=True, random_state=seed)
    return [(tr, te) for tr, te in splitter.split(idx, labels)]


def rmse(y_true, y_pred) -> float:
    y_true, y_pred = _pair(y_true, y_pred)
    return float(np.sqrt(np.mean((y_true.astype(float) - y_pred.astype(float)) ** 2)))


def accuracy(y_true, y_pred) -> float:
    y_true, y_pred = _pair(y_true, y_pred)
    return float(np.mean(y_true == y_pred))


def _pair(a, b):
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size != b.size:
        raise ValueError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise ValueError("empty input")
    return a, b


def metrics(task: str, y_true, y_pred) -> float:
    """RMSE for regression, accuracy for classification."""
    return rmse(y_true, y_pred) if task == "regression" else accuracy(y_true, y_pred)


def higher_is_better(task: str) -> bool:
    return task != "regression"


def fold_metrics(model, ds: Dataset, idx) -> dict:
    """Metric of a trained model on rows ``idx``; regression on the model's normalized scale."""
    X, y = ds.X[idx], ds.y[idx]
    pred = model.predict(X)
    if ds.task != "regression":
        return {"metric": accuracy(y, pred)}
    tt = model.target_transform
    scale = tt.scale if tt is not None else 1.0
    raw = rmse(y, pred)
    return {"metric": raw / scale, "rmse_raw": raw}


# -- grid search ----------------------------------------------------------------

GRID_KEYS = ("lambda_w", "lambda_u", "lambda_c", "n_centers", "learning_rate", "center_mode")


def expand_grid(grids: dict, base: TrainConfig) -> list[TrainConfig]:
    unknown = set(grids) - set(GRID_KEYS)
    if unknown:
        raise ValueError(f"unknown grid keys: {sorted(unknown)}")
    keys = [k for k in GRID_KEYS if k in grids]
    for k in keys:
        if len(grids[k]) == 0:
            raise ValueError(f"grid for {k} is empty")
    configs = []
    for combo in itertools.product(*(grids[k] for k in keys)):
        vals = dict(zip(keys, combo))
        reg = Regularizers(
            float(vals.get("lambda_w", base.reg.lambda_w)),
            float(vals.get("lambda_u", base.reg.lambda_u)),
            float(vals.get("lambda_c", base.reg.lambda_c)),
        )
        cfg = replace(
            base,
            reg=reg,
            n_centers=int(vals.get("n_centers", base.n_centers)),
            learning_rate=float(vals.get("learning_rate", base.learning_rate)),
            center_mode=vals.get("center_mode", base.center_mode),
        )
        configs.append(cfg)
    return configs


def _run_task(args):
    ds, cfg, seed, fold, tr, te = args
    cfg = replace(cfg, seed=seed)
    try:
        model, trace = train(ds.X[tr], ds.y[tr], cfg, ds.task, ds.n_classes)
    except Exception as exc:
        raise RuntimeError(f"training failed for config {cfg} (seed {seed}, fold {fold}): {exc}") from exc
    row = {"seed": seed, "fold": fold}
    train_m = fold_metrics(model, ds, tr)
    test_m = fold_metrics(model, ds, te)
    row["train_metric"] = train_m["metric"]
    row["test_metric"] = test_m["metric"]
    if "rmse_raw" in test_m:
        row["train_rmse_raw"] = train_m["rmse_raw"]
        row["test_rmse_raw"] = test_m["rmse_raw"]
    row["epochs"] = trace.epochs
    return row


def n_workers() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class GridResult:
    task: str
    configs: list[TrainConfig]
    rows: list[dict] = field(default_factory=list)

    def summary(self) -> list[dict]:
        out = []
        for i, cfg in enumerate(self.configs):
            rs = [r for r in self.rows if r["config"] == i]
            tr = np.array([r["train_metric"] for r in rs])
            te = np.array([r["test_metric"] for r in rs])
            out.append({
                "config": i,
                "lambda_w": cfg.reg.lambda_w,
                "lambda_u": cfg.reg.lambda_u,
                "lambda_c": cfg.reg.lambda_c,
                "M": cfg.n_centers,
                "lr": cfg.learning_rate,
                "mode": cfg.center_mode,
                "train_mean": float(tr.mean()),
                "train_std": float(tr.std()),
                "test_mean": float(te.mean()),
                "test_std": float(te.std()),
                "n_runs": len(rs),
            })
        return out

    @property
    def best_index(self) -> int:
        means = np.array([s["test_mean"] for s in self.summary()])
        return int(np.argmax(means) if higher_is_better(self.task) else np.argmin(means))

    @property
    def best_config(self) -> TrainConfig:
        return self.configs[self.best_index]

    def heatmap(self):
        """Best mean test metric per (lambda_w, lambda_u) cell.

        Returns ``(lambda_w values, lambda_u values, table, best_cell)`` where
        ``table[i, j]`` belongs to ``lambda_w[i]`` and ``lambda_u[j]``.
        """
        summ = self.summary()
        lw = sorted({s["lambda_w"] for s in summ})
        lu = sorted({s["lambda_u"] for s in summ})
        better = max if higher_is_better(self.task) else min
        table = np.full((len(lw), len(lu)), np.nan)
        for s in summ:
            i, j = lw.index(s["lambda_w"]), lu.index(s["lambda_u"])
            cur = table[i, j]
            table[i, j] = s["test_mean"] if np.isnan(cur) else better(cur, s["test_mean"])
        flat = np.nanargmax(table) if higher_is_better(self.task) else np.nanargmin(table)
        return lw, lu, table, tuple(int(v) for v in np.unravel_index(flat, table.shape))

    def rows_csv(self) -> str:
        cols = ["lambda_w", "lambda_u", "lambda_c", "M", "lr", "mode", "seed", "fold",
                "train_metric", "test_metric"]
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(cols)
        for r in self.rows:
            c = self.configs[r["config"]]
            wr.writerow([repr(c.reg.lambda_w), repr(c.reg.lambda_u), repr(c.reg.lambda_c),
                         c.n_centers, repr(c.learning_rate), c.center_mode, r["seed"], r["fold"],
                         repr(r["train_metric"]), repr(r["test_metric"])])
        return buf.getvalue()

    def heatmap_csv(self) -> str:
        lw, lu, table, best = self.heatmap()
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["lambda_w \\ lambda_u"] + [repr(v) for v in lu])
        for i, w in enumerate(lw):
            cells = []
            for j in range(len(lu)):
                cell = repr(float(table[i, j]))
                cells.append(cell + ("*" if (i, j) == best else ""))
            wr.writerow([repr(w)] + cells)
        return buf.getvalue()


def grid_search(ds: Dataset, grids: dict, plan: CvPlan, base: TrainConfig | None = None,
                workers: int | None = None) -> GridResult:
    """Cross-validate every grid configuration; rows are ordered by (config, seed, fold)."""
    base = base or TrainConfig()
    configs = expand_grid(grids, base)
    labels = ds.y if (plan.stratify and ds.task != "regression") else None
    splits = {s: kfold_split(ds.n_samples, plan.n_folds, s, labels) for s in plan.seeds}
    tasks, keys = [], []
    for ci, cfg in enumerate(configs):
        for s in plan.seeds:
            for fi, (tr, te) in enumerate(splits[s]):
                tasks.append((ds, cfg, s, fi, tr, te))
                keys.append(ci)
    workers = workers or n_workers()
    if workers > 1:
        with ProcessPoolExecutor(workers) as ex:
            results = list(ex.map(_run_task, tasks))
    else:
        results = [_run_task(t) for t in tasks]
    rows = [dict(r, config=ci) for ci, r in zip(keys, results)]
    return GridResult(ds.task, configs, rows)


def cross_validate(ds: Dataset, cfg: TrainConfig, plan: CvPlan, workers: int | None = None) -> GridResult:
    return grid_search(ds, {}, plan, cfg, workers)
