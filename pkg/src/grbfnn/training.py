"""Full-batch Adam training of the GRBFNN, k-means center selection and the
exact interpolation special case."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .kernel import PrecisionFactor, kernel_matrix, vech_size
from .model import (
    CENTER_MODES,
    SUPERVISED,
    UNSUPERVISED,
    GrbfnnModel,
    Regularizers,
    Standardizer,
    TargetTransform,
    encode_targets,
    objective,
)

TASKS = ("regression", "binary", "multiclass")


class TrainingError(RuntimeError):
    pass


class SingularKernelError(np.linalg.LinAlgError):
    def __init__(self, message, condition=np.inf):
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True)
class TrainConfig:
    n_centers: int = 32
    center_mode: str = UNSUPERVISED
    reg: Regularizers = field(default_factory=Regularizers)
    learning_rate: float = 1e-3
    max_epochs: int = 10000
    tolerance: float = 1e-9
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    standardize: bool = True
    scale_targets: bool = True
    center_targets: bool = True

    def __post_init__(self):
        if int(self.n_centers) < 1:
            raise ValueError("n_centers must be at least 1")
        if self.center_mode not in CENTER_MODES:
            raise ValueError(f"center_mode must be one of {CENTER_MODES}")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if int(self.max_epochs) < 1:
            raise ValueError("max_epochs must be a positive integer")
        if self.tolerance < 0:
            raise ValueError("tolerance must be nonnegative")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")
        for b in (self.adam_beta1, self.adam_beta2):
            if not 0 <= b < 1:
                raise ValueError("Adam betas must lie in [0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["reg"] = Regularizers(**d.get("reg", {}))
        return cls(**d)


@dataclass
class TrainTrace:
    loss_R: np.ndarray
    loss_E: np.ndarray
    grad_norm_w: np.ndarray
    grad_norm_u: np.ndarray
    grad_norm_c: np.ndarray
    epochs: int
    best_epoch: int
    wall_time: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["epoch", "loss_R", "loss_E", "grad_norm_w", "grad_norm_u", "grad_norm_c"])
        for i in range(len(self.loss_R)):
            wr.writerow([i + 1] + [repr(float(a[i])) for a in
                         (self.loss_R, self.loss_E, self.grad_norm_w, self.grad_norm_u, self.grad_norm_c)])
        return buf.getvalue()


# -- k-means ------------------------------------------------------------------


def _sq_dists(X, C):
    d = (X * X).sum(1)[:, None] + (C * C).sum(1)[None, :] - 2.0 * X @ C.T
    return np.maximum(d, 0.0)


def _kmeanspp(X, k, rng):
    n = X.shape[0]
    idx = [int(rng.integers(n))]
    closest = _sq_dists(X, X[idx])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            j = int(rng.choice(n, p=closest / total))
        else:
            j = int(rng.integers(n))
        idx.append(j)
        closest = np.minimum(closest, _sq_dists(X, X[j:j + 1])[:, 0])
    return X[idx].copy()


def kmeans_fit(X, k: int, seed: int = 0, max_iter: int = 300):
    """Lloyd's algorithm with k-means++ seeding.

    Returns ``(centers, labels, inertia_history)``.  An empty cluster is
    re-seeded at the point farthest from its current center.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} must lie in [1, N={n}]")
    rng = np.random.default_rng(seed)
    C = _kmeanspp(X, k, rng)
    history = []
    labels = None
    for _ in range(max_iter):
        d = _sq_dists(X, C)
        new_labels = d.argmin(1)
        cost = d[np.arange(n), new_labels]
        counts = np.bincount(new_labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            far = int(cost.argmax())
            new_labels[far] = j
            cost[far] = 0.0
            counts = np.bincount(new_labels, minlength=k)
        history.append(float(cost.sum()))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        C = np.stack([X[labels == j].mean(0) for j in range(k)])
    return C, labels, history


def kmeans(X, k: int, seed: int = 0, max_iter: int = 300) -> np.ndarray:
    return kmeans_fit(X, k, seed, max_iter)[0]


# -- Adam ---------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n))


def adam_step(params, grads, state: AdamState, t: int, cfg: TrainConfig):
    """One bias-corrected Adam update; returns ``(params, state)``."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or state.m.shape != params.shape:
        raise ValueError("params, grads and optimizer state must have the same shape")
    if t < 1:
        raise ValueError("step index starts at 1")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    m = b1 * state.m + (1 - b1) * grads
    v = b2 * state.v + (1 - b2) * grads * grads
    mhat = m / (1 - b1**t)
    vhat = v / (1 - b2**t)
    new = params - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.adam_eps)
    return new, AdamState(m, v)


# -- training -----------------------------------------------------------------


def median_scale(Xs, seed: int = 0, max_points: int = 256) -> float:
    """1 / median pairwise Euclidean distance over a random subsample."""
    rng = np.random.default_rng(seed)
    n = Xs.shape[0]
    sub = Xs if n <= max_points else Xs[np.sort(rng.choice(n, max_points, replace=False))]
    d = np.sqrt(_sq_dists(sub, sub)[np.triu_indices(sub.shape[0], 1)])
    d = d[d > 0]
    if d.size == 0:
        raise TrainingError("degenerate data: all rows are identical")
    return 1.0 / float(np.median(d))


def _prepare(X, y, task, cfg: TrainConfig, n_classes=0):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if task not in TASKS:
        raise ValueError(f"task must be one of {TASKS}")
    if X.shape[0] < cfg.n_centers:
        raise ValueError(f"N={X.shape[0]} is smaller than the number of centers M={cfg.n_centers}")
    if not np.all(np.isfinite(X)):
        raise ValueError("inputs contain non-finite values")
    if np.all(X == X[0]):
        raise TrainingError("degenerate data: all rows are identical")
    st = Standardizer.fit(X) if cfg.standardize else Standardizer.identity(X.shape[1])
    y = np.asarray(y)
    if task == "regression":
        Y = np.asarray(y, dtype=float).reshape(X.shape[0], -1)
        rescale = cfg.scale_targets
    else:
        if task == "multiclass":
            n_classes = max(n_classes, int(np.max(y)) + 1)
        Y = encode_targets(y, task, n_classes)
        rescale = False
    tt = None
    if cfg.center_targets or rescale:
        tt = TargetTransform.fit(Y, center=cfg.center_targets, rescale=rescale)
        Y = tt.transform(Y)
    return st.transform(X), Y, st, tt, n_classes


def init_model(X, y, cfg: TrainConfig, task: str = "regression", n_classes: int = 0) -> GrbfnnModel:
    """Initial model: k-means centers, isotropic U at the median-distance scale, zero weights."""
    Xs, Y, st, ts, n_classes = _prepare(X, y, task, cfg, n_classes)
    return _init(Xs, Y, st, ts, task, n_classes, cfg)


def _init(Xs, Y, st, ts, task, n_classes, cfg):
    D = Xs.shape[1]
    C = kmeans(Xs, cfg.n_centers, seed=cfg.seed)
    s = median_scale(Xs, seed=cfg.seed)
    return GrbfnnModel(
        weights=np.zeros((cfg.n_centers, Y.shape[1])),
        factor=PrecisionFactor.isotropic(D, s),
        centers=C,
        center_mode=cfg.center_mode,
        standardizer=st,
        target_transform=ts,
        task=task,
        n_classes=n_classes,
        config=cfg.to_dict(),
    )


def train(X, y, cfg: TrainConfig, task: str = "regression", n_classes: int = 0):
    """Minimize the regularized objective with full-batch Adam.

    Returns ``(model, trace)``; the model holds the parameters of the epoch
    with the lowest objective value.
    """
    t0 = time.perf_counter()
    Xs, Y, st, ts, n_classes = _prepare(X, y, task, cfg, n_classes)
    model = _init(Xs, Y, st, ts, task, n_classes, cfg)
    sup = cfg.center_mode == SUPERVISED
    reg = cfg.reg

    M, O = model.weights.shape
    D = model.dim
    nw, nu = M * O, vech_size(D)
    theta = np.concatenate([model.weights.ravel(), model.factor.u,
                            model.centers.ravel() if sup else []])
    C_fixed = model.centers

    def unpack(th):
        w = th[:nw].reshape(M, O)
        u = th[nw:nw + nu]
        C = th[nw + nu:].reshape(M, D) if sup else C_fixed
        return w, u, C

    state = AdamState.zeros(theta.size)
    hist = {k: [] for k in ("R", "E", "gw", "gu", "gc")}
    best_R, best_theta, best_epoch = np.inf, theta.copy(), 0
    prev_R = None
    epoch = 0
    for epoch in range(1, int(cfg.max_epochs) + 1):
        w, u, C = unpack(theta)
        R, E, gw, gu, gc = objective(Xs, Y, w, u, C, reg, sup)
        if not np.isfinite(R):
            raise TrainingError(f"non-finite loss at epoch {epoch}")
        hist["R"].append(R)
        hist["E"].append(E)
        hist["gw"].append(float(np.linalg.norm(gw)))
        hist["gu"].append(float(np.linalg.norm(gu)))
        hist["gc"].append(float(np.linalg.norm(gc)) if sup else 0.0)
        if R < best_R:
            best_R, best_theta, best_epoch = R, theta.copy(), epoch
        if prev_R is not None and abs(R - prev_R) <= cfg.tolerance * max(1.0, prev_R):
            break
        prev_R = R
        g = np.concatenate([gw.ravel(), gu, gc.ravel() if sup else []])
        theta, state = adam_step(theta, g, state, epoch, cfg)

    w, u, C = unpack(best_theta)
    trained = replace(model.with_params(weights=w.copy(), u=u.copy(), centers=C.copy()), trained=True)
    trace = TrainTrace(
        loss_R=np.array(hist["R"]),
        loss_E=np.array(hist["E"]),
        grad_norm_w=np.array(hist["gw"]),
        grad_norm_u=np.array(hist["gu"]),
        grad_norm_c=np.array(hist["gc"]),
        epochs=epoch,
        best_epoch=best_epoch,
        wall_time=time.perf_counter() - t0,
    )
    return trained, trace


# -- interpolation ------------------------------------------------------------


def fit_interpolation(X, Y, scale: float = 1.0, max_condition: float = 1e12) -> np.ndarray:
    """Solve Phi w = Y with a center on every data point and U = scale * I."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.asarray(Y, dtype=float)
    if Y.shape[0] != X.shape[0]:
        raise ValueError("X and Y must have the same number of rows")
    if np.unique(X, axis=0).shape[0] < X.shape[0]:
        raise SingularKernelError("duplicate data rows make the kernel matrix singular", np.inf)
    f = PrecisionFactor.isotropic(X.shape[1], scale)
    Phi = kernel_matrix(X, X, f)
    cond = float(np.linalg.cond(Phi))
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularKernelError(f"kernel matrix is ill-conditioned (condition ~ {cond:.3g})", cond)
    return np.linalg.solve(Phi, Y)
