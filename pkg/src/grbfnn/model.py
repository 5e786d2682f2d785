"""GRBFNN model: forward pass, regularized least-squares objective and its
analytic gradients with respect to weights, precision factor and centers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .kernel import DimensionError, PrecisionFactor, kernel_matrix, unvech, vech

UNSUPERVISED = "unsupervised"
SUPERVISED = "supervised"
CENTER_MODES = (UNSUPERVISED, SUPERVISED)

FORMAT_VERSION = 1


class ModeError(ValueError):
    pass


@dataclass(frozen=True)
class Regularizers:
    lambda_w: float = 0.0
    lambda_u: float = 0.0
    lambda_c: float = 0.0

    def __post_init__(self):
        for name in ("lambda_w", "lambda_u", "lambda_c"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine map x -> (x - mean) / scale."""

    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(X.mean(axis=0), scale)

    @classmethod
    def identity(cls, dim: int) -> "Standardizer":
        return cls(np.zeros(dim), np.ones(dim))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scale + self.mean


@dataclass(frozen=True)
class TargetTransform:
    """Affine target map Y -> (Y - offset) / scale, applied per output column.

    Regression uses the training mean as offset and the training range as
    scale, so residuals live on the min-max normalized scale while the fitted
    targets have zero mean.  Class indicators are only centered.
    """

    offset: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "offset", np.atleast_1d(np.asarray(self.offset, dtype=float)))
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @classmethod
    def fit(cls, Y: np.ndarray, center: bool = True, rescale: bool = True) -> "TargetTransform":
        Y = np.asarray(Y, dtype=float)
        Y = Y.reshape(Y.shape[0], -1)
        offset = Y.mean(axis=0) if center else np.zeros(Y.shape[1])
        scale = 1.0
        if rescale:
            span = float(Y.max() - Y.min())
            scale = span if span > 0 else 1.0
        return cls(offset, scale)

    def transform(self, Y):
        return (np.asarray(Y, dtype=float) - self._shape(Y)) / self.scale

    def inverse(self, T):
        return np.asarray(T, dtype=float) * self.scale + self._shape(T)

    def _shape(self, Y):
        return self.offset if np.ndim(Y) > 1 else self.offset[0]


@dataclass(frozen=True)
class GrbfnnModel:
    weights: np.ndarray  # M x O
    factor: PrecisionFactor
    centers: np.ndarray  # M x D, in standardized coordinates
    center_mode: str = UNSUPERVISED
    standardizer: Standardizer | None = None
    target_transform: TargetTransform | None = None
    task: str = "regression"
    n_classes: int = 0
    config: dict[str, Any] = field(default_factory=dict)
    metrics: dict[str, Any] = field(default_factory=dict)
    trained: bool = False

    def __post_init__(self):
        w = np.atleast_2d(np.asarray(self.weights, dtype=float))
        if w.shape[0] == 1 and np.ndim(self.weights) == 1:
            w = w.T
        C = np.atleast_2d(np.asarray(self.centers, dtype=float))
        if C.shape[1] != self.factor.dim:
            raise DimensionError(f"centers have {C.shape[1]} columns, factor has D={self.factor.dim}")
        if w.shape[0] != C.shape[0]:
            raise DimensionError(f"{w.shape[0]} weight rows for {C.shape[0]} centers")
        if self.center_mode not in CENTER_MODES:
            raise ModeError(f"unknown center mode {self.center_mode!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "centers", C)
        if self.standardizer is None:
            object.__setattr__(self, "standardizer", Standardizer.identity(C.shape[1]))

    @property
    def dim(self) -> int:
        return self.factor.dim

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0]

    @property
    def n_outputs(self) -> int:
        return self.weights.shape[1]

    @property
    def n_parameters(self) -> int:
        n = self.weights.size + self.factor.u.size
        if self.center_mode == SUPERVISED:
            n += self.centers.size
        return n

    def with_params(self, weights=None, u=None, centers=None) -> "GrbfnnModel":
        factor = self.factor if u is None else PrecisionFactor(self.dim, u)
        return replace(
            self,
            weights=self.weights if weights is None else weights,
            factor=factor,
            centers=self.centers if centers is None else centers,
        )

    # -- prediction helpers -------------------------------------------------

    def standardize(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise DimensionError(f"expected {self.dim} features, got {X.shape[1]}")
        return self.standardizer.transform(X)

    def output(self, X) -> np.ndarray:
        """Forward pass mapped back through the target transform."""
        f = forward(self, X)
        return self.target_transform.inverse(f) if self.target_transform else f

    def predict(self, X) -> np.ndarray:
        """Predictions in original units: values for regression, labels otherwise."""
        f = self.output(X)
        if self.task == "regression":
            return f[:, 0]
        if self.task == "binary":
            return (f[:, 0] >= 0.5).astype(int)
        return np.argmax(f, axis=1)

    def predict_proba(self, X) -> np.ndarray:
        """Class scores clamped to [0, 1]; for display only."""
        f = np.clip(self.output(X), 0.0, 1.0)
        if self.task == "binary":
            return np.column_stack([1.0 - f[:, 0], f[:, 0]])
        return f


def encode_targets(y, task: str, n_classes: int = 0) -> np.ndarray:
    """Targets as an N x O matrix: column for regression/binary, one-hot otherwise."""
    y = np.asarray(y)
    if task in ("regression", "binary"):
        return y.astype(float).reshape(-1, 1)
    labels = y.astype(int)
    k = max(n_classes, int(labels.max()) + 1)
    Y = np.zeros((labels.size, k))
    Y[np.arange(labels.size), labels] = 1.0
    return Y


# -- objective ----------------------------------------------------------------


def _as_targets(Y, n: int, o: int) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y.reshape(-1, 1)
    if Y.shape != (n, o):
        raise DimensionError(f"targets have shape {Y.shape}, expected {(n, o)}")
    return Y


def objective(Xs, Y, w, u, C, reg: Regularizers, supervised: bool, need_grad: bool = True):
    """Loss and gradients on already-standardized inputs.

    Returns ``(R, E, grad_w, grad_u, grad_C)``; ``grad_C`` is None unless
    ``supervised``.  With ``need_grad=False`` only ``(R, E)`` is returned.
    """
    D = Xs.shape[1]
    U = unvech(u, D)
    A = Xs @ U.T
    B = C @ U.T
    Phi = A @ B.T
    Phi *= -2.0
    Phi += np.einsum("ij,ij->i", A, A)[:, None]
    Phi += np.einsum("ij,ij->i", B, B)[None, :]
    np.maximum(Phi, 0.0, out=Phi)
    Phi *= -0.5
    np.exp(Phi, out=Phi)
    r = Y - Phi @ w
    E = 0.5 * float(np.sum(r * r))
    G = 0.5 * (reg.lambda_w * float(np.sum(w * w)) + reg.lambda_u * float(u @ u))
    if supervised:
        G += 0.5 * reg.lambda_c * float(np.sum(C * C))
    R = E + G
    if not need_grad:
        return R, E

    gw = reg.lambda_w * w - Phi.T @ r
    # dE/dPhi_nm = -sum_o r_no w_mo; dPhi_nm/dU = -Phi_nm U d d^T
    S = (r @ w.T) * Phi
    rows = S.sum(1)
    cols = S.sum(0)
    XS = Xs.T @ S @ C
    M2 = (Xs.T * rows) @ Xs - XS - XS.T + (C.T * cols) @ C
    gu = vech(U @ M2) + reg.lambda_u * u
    gc = None
    if supervised:
        P = U.T @ U
        gc = -(S.T @ Xs - cols[:, None] * C) @ P + reg.lambda_c * C
    return R, E, gw, gu, gc


def forward(model: GrbfnnModel, X) -> np.ndarray:
    Xs = model.standardize(X)
    return kernel_matrix(Xs, model.centers, model.factor) @ model.weights


def _eval(model, X, Y, reg, need_grad):
    Xs = model.standardize(X)
    Y = _as_targets(Y, Xs.shape[0], model.n_outputs)
    return objective(
        Xs, Y, model.weights, model.factor.u, model.centers, reg,
        model.center_mode == SUPERVISED, need_grad,
    )


def loss_E(model: GrbfnnModel, X, Y) -> float:
    """Half the sum of squared residuals."""
    return _eval(model, X, Y, Regularizers(), False)[1]


def penalty_G(model: GrbfnnModel, reg: Regularizers) -> float:
    g = reg.lambda_w * np.sum(model.weights**2) + reg.lambda_u * np.sum(model.factor.u**2)
    if model.center_mode == SUPERVISED:
        g += reg.lambda_c * np.sum(model.centers**2)
    return 0.5 * float(g)


def loss_R(model: GrbfnnModel, X, Y, reg: Regularizers) -> float:
    return _eval(model, X, Y, reg, False)[0]


def grad_w(model: GrbfnnModel, X, Y, reg: Regularizers) -> np.ndarray:
    return _eval(model, X, Y, reg, True)[2]


def grad_u(model: GrbfnnModel, X, Y, reg: Regularizers) -> np.ndarray:
    return _eval(model, X, Y, reg, True)[3]


def grad_c(model: GrbfnnModel, X, Y, reg: Regularizers) -> np.ndarray:
    if model.center_mode != SUPERVISED:
        raise ModeError("center gradient is only defined for supervised centers")
    return _eval(model, X, Y, reg, True)[4]


# -- finite-difference check --------------------------------------------------


def _fd_block(fun, x, step):
    g = np.zeros_like(x)
    flat = x.ravel()
    gflat = g.ravel()
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        fp = fun()
        flat[i] = old - step
        fm = fun()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * step)
    return g


def relative_error(a, b) -> float:
    """max |a - b| scaled by the larger of the two blocks' max-norms."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-10)
    return float(np.abs(a - b).max(initial=0.0) / scale)


def numerical_gradients(model: GrbfnnModel, X, Y, reg: Regularizers, step: float = 1e-5) -> dict:
    Xs = model.standardize(X)
    Y = _as_targets(Y, Xs.shape[0], model.n_outputs)
    w = model.weights.copy()
    u = model.factor.u.copy()
    C = model.centers.copy()
    sup = model.center_mode == SUPERVISED

    def fun():
        return objective(Xs, Y, w, u, C, reg, sup, need_grad=False)[0]

    out = {"w": _fd_block(fun, w, step), "u": _fd_block(fun, u, step)}
    if sup:
        out["c"] = _fd_block(fun, C, step)
    return out


def analytic_gradients(model: GrbfnnModel, X, Y, reg: Regularizers) -> dict:
    _, _, gw, gu, gc = _eval(model, X, Y, reg, True)
    out = {"w": gw, "u": gu}
    if gc is not None:
        out["c"] = gc
    return out


def gradient_check(model: GrbfnnModel, X, Y, reg: Regularizers, step: float = 1e-5,
                   analytic: dict | None = None) -> dict[str, float]:
    """Max relative error of each analytic gradient block against central differences."""
    if step <= 0:
        raise ValueError("step must be positive")
    if analytic is None:
        analytic = analytic_gradients(model, X, Y, reg)
    numeric = numerical_gradients(model, X, Y, reg, step)
    return {k: relative_error(analytic[k], numeric[k]) for k in numeric}


# -- serialization ------------------------------------------------------------


def model_to_dict(model: GrbfnnModel) -> dict:
    st = model.standardizer
    tt = model.target_transform
    return {
        "format": "grbfnn-model",
        "version": FORMAT_VERSION,
        "dims": {"D": model.dim, "M": model.n_centers, "O": model.n_outputs},
        "task": model.task,
        "n_classes": model.n_classes,
        "center_mode": model.center_mode,
        "u": model.factor.u.tolist(),
        "w": model.weights.ravel().tolist(),
        "C": model.centers.ravel().tolist(),
        "standardization": {"mean": st.mean.tolist(), "scale": st.scale.tolist()},
        "target_transform": None if tt is None else {"offset": tt.offset.tolist(), "scale": tt.scale},
        "config": model.config,
        "metrics": model.metrics,
        "trained": model.trained,
    }


def model_from_dict(doc: dict) -> GrbfnnModel:
    if doc.get("format") != "grbfnn-model":
        raise ValueError("not a grbfnn model document")
    D, M, O = doc["dims"]["D"], doc["dims"]["M"], doc["dims"]["O"]
    tt = doc.get("target_transform")
    st = doc["standardization"]
    return GrbfnnModel(
        weights=np.array(doc["w"], dtype=float).reshape(M, O),
        factor=PrecisionFactor(D, np.array(doc["u"], dtype=float)),
        centers=np.array(doc["C"], dtype=float).reshape(M, D),
        center_mode=doc["center_mode"],
        standardizer=Standardizer(np.array(st["mean"], dtype=float), np.array(st["scale"], dtype=float)),
        target_transform=None if tt is None else TargetTransform(tt["offset"], tt["scale"]),
        task=doc.get("task", "regression"),
        n_classes=doc.get("n_classes", 0),
        config=doc.get("config", {}),
        metrics=doc.get("metrics", {}),
        trained=doc.get("trained", True),
    )


def dumps(model: GrbfnnModel) -> str:
    # json writes floats with repr(), which round-trips exactly
    return json.dumps(model_to_dict(model), indent=1)


def loads(text: str) -> GrbfnnModel:
    return model_from_dict(json.loads(text))


def save_model(model: GrbfnnModel, path) -> None:
    from .io import atomic_write_text

    atomic_write_text(Path(path), dumps(model))


def load_model(path) -> GrbfnnModel:
    return loads(Path(path).read_text())
