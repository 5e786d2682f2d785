"""Eigen-analysis of the learned precision matrix: active subspace,
eigenvalue decay and the feature-importance ranking."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .kernel import precision_matrix
from .model import GrbfnnModel, forward


class ConvergenceError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class PrecisionSpectrum:
    eigenvalues: np.ndarray  # descending, clamped at zero
    eigenvectors: np.ndarray  # columns paired with eigenvalues

    @property
    def dim(self) -> int:
        return self.eigenvalues.size

    @property
    def decay(self) -> np.ndarray:
        total = self.eigenvalues.sum()
        if total <= 0:
            return np.zeros_like(self.eigenvalues)
        return self.eigenvalues / total

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.decay)

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


def jacobi_eigh(A, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi diagonalization of a symmetric matrix.

    Returns unsorted ``(eigenvalues, eigenvectors, sweeps)``.  Iterates until
    the off-diagonal Frobenius norm drops to ``tol * ||A||_F``.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    V = np.eye(n)
    norm = np.linalg.norm(A)
    target = tol * norm
    for sweep in range(max_sweeps + 1):
        off = np.linalg.norm(A[~np.eye(n, dtype=bool)])
        if off <= target or norm == 0:
            return np.diag(A).copy(), V, sweep
        if sweep == max_sweeps:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                g = 100.0 * abs(apq)
                if abs(A[p, p]) + g == abs(A[p, p]) and abs(A[q, q]) + g == abs(A[q, q]):
                    A[p, q] = A[q, p] = 0.0
                    continue
                # tan of the rotation angle, written without forming theta = d / (2 apq)
                d = A[q, q] - A[p, p]
                if d == 0.0:
                    t = 1.0
                else:
                    t = 2.0 * apq * np.sign(d) / (abs(d) + np.hypot(d, 2.0 * apq))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) plane rotation
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    raise ConvergenceError(f"Jacobi iteration did not converge in {max_sweeps} sweeps")


def eig_symmetric(P, sym_tol: float = 1e-10, clamp_tol: float = 1e-10) -> PrecisionSpectrum:
    """Sorted eigenpairs of a symmetric PSD matrix with a fixed sign convention."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {P.shape}")
    if np.abs(P - P.T).max(initial=0.0) > sym_tol * max(1.0, np.abs(P).max(initial=0.0)):
        raise ValueError("matrix is not symmetric")
    vals, vecs, _ = jacobi_eigh(0.5 * (P + P.T))
    order = np.argsort(-vals, kind="stable")
    vals, vecs = vals[order], vecs[:, order]
    scale = max(1.0, np.abs(vals).max(initial=0.0))
    if np.any(vals < -clamp_tol * scale):
        raise ValueError(f"matrix has a negative eigenvalue {vals.min():.3g}")
    vals = np.maximum(vals, 0.0)
    for k in range(vecs.shape[1]):
        nz = np.flatnonzero(np.abs(vecs[:, k]) > 1e-12)
        if nz.size and vecs[nz[0], k] < 0:
            vecs[:, k] = -vecs[:, k]
    return PrecisionSpectrum(vals, vecs)


def model_spectrum(model: GrbfnnModel) -> PrecisionSpectrum:
    return eig_symmetric(precision_matrix(model.factor))


@dataclass(frozen=True)
class FeatureImportance:
    scores: np.ndarray  # max-normalized
    per_component: np.ndarray  # D x K addends gamma_k * |v_k|, same normalization

    def ranking(self) -> np.ndarray:
        """Feature indices from most to least important."""
        return np.argsort(-self.scores, kind="stable")


def feature_importance(s: PrecisionSpectrum) -> FeatureImportance:
    parts = np.abs(s.eigenvectors) * s.eigenvalues[None, :]
    raw = parts.sum(axis=1)
    top = raw.max(initial=0.0)
    if top <= 0:
        return FeatureImportance(np.zeros_like(raw), np.zeros_like(parts))
    return FeatureImportance(raw / top, parts / top)


def active_projection(X, s: PrecisionSpectrum, k: int | None = None) -> np.ndarray:
    """Latent coordinates Z = X V[:, :k]."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    k = s.dim if k is None else k
    if not 1 <= k <= s.dim:
        raise ValueError(f"k must be in [1, {s.dim}], got {k}")
    if X.shape[1] != s.dim:
        raise ValueError(f"X has {X.shape[1]} columns, spectrum has D={s.dim}")
    return X @ s.eigenvectors[:, :k]


def active_dimension(s: PrecisionSpectrum, threshold: float = 0.95) -> int:
    """Smallest k whose leading eigenvalues hold at least ``threshold`` of the total."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must be in (0, 1]")
    total = s.eigenvalues.sum()
    if total <= 0:
        raise ValueError("spectrum is identically zero")
    frac = np.cumsum(s.eigenvalues) / total
    # guard the threshold = 1 case against rounding in the cumulative sum
    hits = np.flatnonzero(frac >= threshold - 1e-12)
    return int(hits[0]) + 1


def subspace_surface(model: GrbfnnModel, s: PrecisionSpectrum, grid_bounds, resolution: int = 50):
    """Model output on a grid over the two leading latent coordinates.

    ``grid_bounds`` is ``((z1_min, z1_max), (z2_min, z2_max))`` in the
    standardized latent space.  The remaining latent coordinates are zero.
    Returns an array of ``(z1, z2, f)`` rows, f in the model's fitting scale.
    """
    if s.dim < 2:
        raise ValueError("surface needs at least two input dimensions")
    if not model.trained:
        raise ValueError("model has not been trained")
    (a0, a1), (b0, b1) = grid_bounds
    z1, z2 = np.meshgrid(np.linspace(a0, a1, resolution), np.linspace(b0, b1, resolution), indexing="ij")
    Z = np.column_stack([z1.ravel(), z2.ravel()])
    Xs = Z @ s.eigenvectors[:, :2].T
    X = model.standardizer.inverse(Xs)
    f = forward(model, X)
    return np.column_stack([Z, f])


# -- exports ----------------------------------------------------------------------


def _csv(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([v if isinstance(v, str) else repr(float(v)) if not isinstance(v, (int, np.integer)) else int(v)
                     for v in r])
    return buf.getvalue()


def eigenvalues_csv(s: PrecisionSpectrum) -> str:
    return _csv(["k", "gamma", "decay", "cumulative"],
                [(k + 1, g, d, c) for k, (g, d, c) in enumerate(zip(s.eigenvalues, s.decay, s.cumulative))])


def importance_csv(fi: FeatureImportance, names) -> str:
    K = fi.per_component.shape[1]
    return _csv(["feature", "score"] + [f"component_{k + 1}" for k in range(K)],
                [(n, sc, *fi.per_component[d]) for d, (n, sc) in enumerate(zip(names, fi.scores))])


def projection_csv(Z, y) -> str:
    k = Z.shape[1]
    return _csv([f"z{i + 1}" for i in range(k)] + ["target"], [(*z, t) for z, t in zip(Z, y)])


def surface_csv(surface) -> str:
    n_out = surface.shape[1] - 2
    names = ["f"] if n_out == 1 else [f"f{k}" for k in range(n_out)]
    return _csv(["z1", "z2"] + names, surface)
