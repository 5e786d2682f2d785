"""Command-line interface: ``grbfnn {synth,train,analyze,cv,predict,gradcheck,rerun}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import PROBLEMS, DataError, Dataset, generate, load_csv, read_csv_text, save_csv
from .evaluation import CvPlan, fold_metrics, grid_search
from .io import atomic_write_text
from .kernel import PrecisionFactor
from .model import (
    SUPERVISED,
    UNSUPERVISED,
    GrbfnnModel,
    Regularizers,
    gradient_check,
    load_model,
    save_model,
)
from .spectrum import (
    active_projection,
    eigenvalues_csv,
    feature_importance,
    importance_csv,
    model_spectrum,
    projection_csv,
    subspace_surface,
    surface_csv,
)
from .training import TrainConfig, train

log = logging.getLogger("grbfnn")

MODES = {"kmeans": UNSUPERVISED, "learn": SUPERVISED}


def positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {v}")
    return v


def nonneg_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative number, got {v}")
    return v


def positive_float(text: str) -> float:
    v = nonneg_float(text)
    if v == 0:
        raise argparse.ArgumentTypeError("expected a positive number")
    return v


def float_list(text: str) -> list[float]:
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals or any(v < 0 for v in vals):
        raise argparse.ArgumentTypeError(f"expected nonnegative comma-separated numbers, got {text!r}")
    return vals


def int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError(f"expected positive comma-separated integers, got {text!r}")
    return vals


def mode_list(text: str) -> list[str]:
    vals = [t.strip() for t in text.split(",") if t.strip()]
    bad = [v for v in vals if v not in MODES]
    if not vals or bad:
        raise argparse.ArgumentTypeError(f"modes must be among {sorted(MODES)}, got {text!r}")
    return [MODES[v] for v in vals]


# -- helpers ------------------------------------------------------------------------


def infer_task(y: np.ndarray) -> str:
    """Integer-valued targets with few distinct values are treated as class labels."""
    y = np.asarray(y, dtype=float)
    if np.all(y == np.round(y)) and y.min() >= 0:
        k = np.unique(y).size
        if k <= 2 and y.max() <= 1:
            return "binary"
        if k <= 20:
            return "multiclass"
    return "regression"


def read_dataset(path, target: str, task: str) -> Dataset:
    ds = load_csv(path, target, "regression")
    if task == "auto":
        task = infer_task(ds.y)
    if task != "regression":
        ds = Dataset(ds.X, ds.y, task, ds.feature_names, target_name=ds.target_name)
    return ds


def write_manifest(out_path, command: str, argv, config: dict, inputs, outputs, t0, metrics=None):
    doc = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seed": config.get("seed"),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "tool": "grbfnn",
        "version": __version__,
        "wall_time": time.perf_counter() - t0,
        "metrics": metrics or {},
    }
    atomic_write_text(Path(str(out_path) + ".manifest.json"), json.dumps(doc, indent=1) + "\n")


def train_metric_of(model: GrbfnnModel, ds: Dataset) -> float:
    return fold_metrics(model, ds, np.arange(ds.n_samples))["metric"]


def metric_name(task: str) -> str:
    return "rmse" if task == "regression" else "accuracy"


# -- commands -------------------------------------------------------------------------


def cmd_synth(args, argv, t0):
    params = {}
    for key in ("a", "b", "noise"):
        v = getattr(args, key)
        if v is not None:
            params[key] = v
    ds = generate(args.problem, args.n, args.seed, **params)
    save_csv(ds, args.out)
    cfg = {"problem": args.problem, "n": args.n, "seed": args.seed, "params": params, "task": ds.task}
    write_manifest(args.out, "synth", argv, cfg, [], [args.out], t0)
    print(f"wrote {ds.n_samples} x {ds.n_features + 1} {ds.task} dataset to {args.out}")


def cmd_train(args, argv, t0):
    ds = read_dataset(args.data, args.target, args.task)
    cfg = TrainConfig(
        n_centers=args.centers,
        center_mode=MODES[args.mode],
        reg=Regularizers(args.lambda_w, args.lambda_u, args.lambda_c),
        learning_rate=args.lr,
        max_epochs=args.epochs,
        tolerance=args.tol,
        seed=args.seed,
    )
    model, trace = train(ds.X, ds.y, cfg, ds.task, ds.n_classes)
    metric = train_metric_of(model, ds)
    model = replace(model, metrics={
        "train_" + metric_name(ds.task): metric,
        "epochs": trace.epochs,
        "best_epoch": trace.best_epoch,
        "final_loss_R": float(trace.loss_R[trace.best_epoch - 1]),
    })
    save_model(model, args.model_out)
    trace_out = args.trace_out or str(args.model_out) + ".trace.csv"
    atomic_write_text(trace_out, trace.to_csv())
    write_manifest(args.model_out, "train", argv, cfg.to_dict(), [args.data],
                   [args.model_out, trace_out], t0, model.metrics)
    print(f"train {metric_name(ds.task)}: {metric:.6g} (epochs {trace.epochs}, best {trace.best_epoch})")


def _check_dims(model: GrbfnnModel, ds: Dataset):
    if ds.n_features != model.dim:
        raise DataError(f"data has {ds.n_features} features, model expects D={model.dim}")


def cmd_analyze(args, argv, t0):
    model = load_model(args.model)
    ds = read_dataset(args.data, args.target, model.task)
    _check_dims(model, ds)
    out = Path(args.out_dir)
    sp = model_spectrum(model)
    fi = feature_importance(sp)
    Xs = model.standardize(ds.X)
    k = min(args.k, model.dim)
    Z = active_projection(Xs, sp, k)
    files = {
        "eigenvalues.csv": eigenvalues_csv(sp),
        "importance.csv": importance_csv(fi, ds.feature_names),
        "projection.csv": projection_csv(Z, ds.y),
    }
    if model.dim >= 2:
        Z2 = active_projection(Xs, sp, 2)
        pad = 0.05 * (Z2.max(0) - Z2.min(0))
        bounds = [(Z2[:, j].min() - pad[j], Z2[:, j].max() + pad[j]) for j in range(2)]
        surf = subspace_surface(model, sp, bounds, args.resolution)
        # original target scale, then min-max normalized to [0, 1] per output
        F = surf[:, 2:]
        if model.target_transform is not None:
            F = model.target_transform.inverse(F)
        lo, hi = F.min(0), F.max(0)
        F = np.where(hi > lo, (F - lo) / np.where(hi > lo, hi - lo, 1.0), F)
        surf = np.column_stack([surf[:, :2], F])
        files["surface.csv"] = surface_csv(surf)
    for name, text in files.items():
        atomic_write_text(out / name, text)
    headline = float(sp.decay[0])
    order = fi.ranking()
    metrics = {"gamma1_fraction": headline,
               "ranking": [ds.feature_names[i] for i in order]}
    write_manifest(out / "analysis", "analyze", argv, {"k": k, "resolution": args.resolution},
                   [args.model, args.data], [out / n for n in files], t0, metrics)
    print(f"gamma_1 / sum(gamma) = {headline:.6f}")
    print("importance ranking: " + ", ".join(f"{ds.feature_names[i]}={fi.scores[i]:.3f}" for i in order))


def cmd_cv(args, argv, t0):
    ds = read_dataset(args.data, args.target, args.task)
    base = TrainConfig(n_centers=args.centers[0], learning_rate=args.lr[0], max_epochs=args.epochs,
                       tolerance=args.tol, center_mode=args.mode[0])
    grids = {
        "lambda_w": args.lambda_w,
        "lambda_u": args.lambda_u,
        "lambda_c": args.lambda_c,
        "n_centers": args.centers,
        "learning_rate": args.lr,
        "center_mode": args.mode,
    }
    seeds = tuple(range(args.seed, args.seed + args.seeds))
    plan = CvPlan(n_folds=args.folds, seeds=seeds, stratify=not args.no_stratify)
    result = grid_search(ds, grids, plan, base)
    out = Path(args.out)
    heat_path = out.with_name(out.stem + ".heatmap.csv")
    atomic_write_text(out, result.rows_csv())
    atomic_write_text(heat_path, result.heatmap_csv())
    summ = result.summary()
    best = summ[result.best_index]
    report = {"metric": metric_name(ds.task), "best": best, "summary": summ}
    report_path = out.with_name(out.stem + ".report.json")
    atomic_write_text(report_path, json.dumps(report, indent=1) + "\n")
    write_manifest(out, "cv", argv, {"grids": grids, "folds": args.folds, "seeds": list(seeds),
                                      "epochs": args.epochs, "seed": args.seed},
                   [args.data], [out, heat_path, report_path], t0, {"best": best})
    print(f"{len(result.rows)} runs over {len(summ)} configurations")
    print(f"best: lambda_w={best['lambda_w']} lambda_u={best['lambda_u']} lambda_c={best['lambda_c']} "
          f"M={best['M']} lr={best['lr']} mode={best['mode']} "
          f"test {report['metric']}={best['test_mean']:.6g} +/- {best['test_std']:.3g}")
    print(result.heatmap_csv(), end="")


def cmd_predict(args, argv, t0):
    model = load_model(args.model)
    text = Path(args.data).read_text()
    header = next(csv.reader(io.StringIO(text)), [])
    target = args.target if args.target in [h.strip() for h in header] else None
    ds = read_csv_text(text, target, "regression")
    if target is not None and model.task != "regression":
        ds = Dataset(ds.X, ds.y, model.task, ds.feature_names, target_name=ds.target_name)
    _check_dims(model, ds)
    pred = model.predict(ds.X)
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    if model.task == "regression":
        wr.writerow(["prediction"])
        for p in pred:
            wr.writerow([repr(float(p))])
    else:
        proba = model.predict_proba(ds.X)
        wr.writerow(["prediction"] + [f"p{k}" for k in range(proba.shape[1])])
        for p, row in zip(pred, proba):
            wr.writerow([int(p)] + [repr(float(v)) for v in row])
    atomic_write_text(args.out, buf.getvalue())
    metrics = {}
    if target is not None:
        metrics[metric_name(model.task)] = train_metric_of(model, ds)
    write_manifest(args.out, "predict", argv, {}, [args.model, args.data], [args.out], t0, metrics)
    print(f"wrote {len(pred)} predictions to {args.out}")
    for k, v in metrics.items():
        print(f"{k}: {v:.6g}")


def cmd_gradcheck(args, argv, t0):
    rng = np.random.default_rng(args.seed)
    N, D, M, O = args.n, args.d, args.m, args.outputs
    X = rng.uniform(-1, 1, (N, D))
    Y = rng.uniform(-1, 1, (N, O))
    model = GrbfnnModel(
        weights=rng.uniform(-1, 1, (M, O)),
        factor=PrecisionFactor(D, rng.uniform(-1, 1, D * (D + 1) // 2)),
        centers=rng.uniform(-1, 1, (M, D)),
        center_mode=MODES[args.mode],
    )
    reg = Regularizers(args.lambda_w, args.lambda_u, args.lambda_c)
    report = gradient_check(model, X, Y, reg, args.step)
    for block, err in report.items():
        print(f"{block}: max relative error {err:.3e}")
    worst = max(report.values())
    ok = worst <= args.tol
    print("PASS" if ok else "FAIL", f"(tolerance {args.tol:g})")
    if not ok:
        raise RuntimeError(f"gradient check failed: worst relative error {worst:.3e}")


def cmd_rerun(args, argv, t0):
    doc = json.loads(Path(args.manifest).read_text())
    return main(doc["argv"])


# -- parser -------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="grbfnn", description="Gaussian RBF network with a learned precision matrix.")
    p.add_argument("--version", action="version", version=f"grbfnn {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("problem", choices=PROBLEMS)
    s.add_argument("--n", type=positive_int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)
    s.add_argument("--a", type=float, default=None, help="sine_ridge coefficient of x1")
    s.add_argument("--b", type=float, default=None, help="sine_ridge coefficient of x2")
    s.add_argument("--noise", type=float, default=None)
    s.set_defaults(func=cmd_synth)

    def data_args(q, task=True):
        q.add_argument("data")
        q.add_argument("--target", default="y")
        if task:
            q.add_argument("--task", choices=["auto", "regression", "binary", "multiclass"], default="auto")

    t = sub.add_parser("train", help="train a model")
    data_args(t)
    t.add_argument("--centers", type=positive_int, default=32)
    t.add_argument("--mode", choices=sorted(MODES), default="kmeans")
    t.add_argument("--lambda-w", type=nonneg_float, default=0.0)
    t.add_argument("--lambda-u", type=nonneg_float, default=0.0)
    t.add_argument("--lambda-c", type=nonneg_float, default=0.0)
    t.add_argument("--lr", type=positive_float, default=1e-3)
    t.add_argument("--epochs", type=positive_int, default=10000)
    t.add_argument("--tol", type=nonneg_float, default=1e-9)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--model-out", required=True)
    t.add_argument("--trace-out", default=None)
    t.set_defaults(func=cmd_train)

    a = sub.add_parser("analyze", help="spectrum, feature importance and active-subspace exports")
    a.add_argument("model")
    data_args(a, task=False)
    a.add_argument("--out-dir", required=True)
    a.add_argument("--k", type=positive_int, default=2, help="latent dimensions in projection.csv")
    a.add_argument("--resolution", type=positive_int, default=50)
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("cv", help="cross-validated grid search")
    data_args(c)
    c.add_argument("--lambda-w", type=float_list, default=[0.0])
    c.add_argument("--lambda-u", type=float_list, default=[0.0])
    c.add_argument("--lambda-c", type=float_list, default=[0.0])
    c.add_argument("--centers", type=int_list, default=[32])
    c.add_argument("--lr", type=float_list, default=[1e-3])
    c.add_argument("--mode", type=mode_list, default=[UNSUPERVISED])
    c.add_argument("--folds", type=positive_int, default=5)
    c.add_argument("--seeds", type=positive_int, default=1)
    c.add_argument("--seed", type=int, default=0, help="first seed")
    c.add_argument("--epochs", type=positive_int, default=10000)
    c.add_argument("--tol", type=nonneg_float, default=1e-9)
    c.add_argument("--no-stratify", action="store_true")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_cv)

    r = sub.add_parser("predict", help="predict with a trained model")
    r.add_argument("model")
    data_args(r, task=False)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_predict)

    g = sub.add_parser("gradcheck", help="compare analytic gradients with finite differences")
    g.add_argument("--n", type=positive_int, default=8)
    g.add_argument("--d", type=positive_int, default=4)
    g.add_argument("--m", type=positive_int, default=3)
    g.add_argument("--outputs", type=positive_int, default=1)
    g.add_argument("--mode", choices=sorted(MODES), default="kmeans")
    g.add_argument("--lambda-w", type=nonneg_float, default=0.1)
    g.add_argument("--lambda-u", type=nonneg_float, default=0.1)
    g.add_argument("--lambda-c", type=nonneg_float, default=0.1)
    g.add_argument("--step", type=positive_float, default=1e-5)
    g.add_argument("--tol", type=positive_float, default=1e-5)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=cmd_gradcheck)

    m = sub.add_parser("rerun", help="re-execute the command recorded in a manifest")
    m.add_argument("manifest")
    m.set_defaults(func=cmd_rerun)
    return p


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "synth" and args.out is None:
        args.out = f"{args.problem}.csv"
    t0 = time.perf_counter()
    try:
        rc = args.func(args, argv, t0)
    except (DataError, ValueError, RuntimeError, OSError, np.linalg.LinAlgError, KeyError) as exc:
        print(f"grbfnn {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return int(rc or 0)


if __name__ == "__main__":
    sys.exit(main())
