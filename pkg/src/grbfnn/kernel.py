"""Precision-matrix parameterization and Mahalanobis Gaussian kernel.

The precision matrix is kept in factored form ``P = U^T U`` with ``U`` upper
triangular.  Its free entries live in a flat vector ``u`` (row-major over the
upper triangle, diagonal first within each row).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DimensionError(ValueError):
    pass


def vech_size(dim: int) -> int:
    return dim * (dim + 1) // 2


def dim_from_vech_size(n: int) -> int:
    dim = int((np.sqrt(8 * n + 1) - 1) // 2)
    if vech_size(dim) != n:
        raise DimensionError(f"length {n} is not a triangular number")
    return dim


def vech(U: np.ndarray) -> np.ndarray:
    """Pack the upper triangle of a square matrix, row by row."""
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[0] != U.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {U.shape}")
    return U[np.triu_indices(U.shape[0])].copy()


def unvech(u: np.ndarray, dim: int | None = None) -> np.ndarray:
    u = np.asarray(u, dtype=float).ravel()
    if dim is None:
        dim = dim_from_vech_size(u.size)
    elif u.size != vech_size(dim):
        raise DimensionError(f"expected {vech_size(dim)} entries for D={dim}, got {u.size}")
    U = np.zeros((dim, dim))
    U[np.triu_indices(dim)] = u
    return U


@dataclass(frozen=True)
class PrecisionFactor:
    dim: int
    u: np.ndarray

    def __post_init__(self):
        u = np.asarray(self.u, dtype=float).ravel()
        if self.dim < 1:
            raise DimensionError("dim must be positive")
        if u.size != vech_size(self.dim):
            raise DimensionError(
                f"u has {u.size} entries, expected {vech_size(self.dim)} for D={self.dim}"
            )
        object.__setattr__(self, "u", u)

    @classmethod
    def from_matrix(cls, U: np.ndarray) -> "PrecisionFactor":
        U = np.asarray(U, dtype=float)
        return cls(U.shape[0], vech(U))

    @classmethod
    def isotropic(cls, dim: int, scale: float = 1.0) -> "PrecisionFactor":
        return cls.from_matrix(scale * np.eye(dim))

    @property
    def U(self) -> np.ndarray:
        return unvech(self.u, self.dim)


def precision_matrix(f: PrecisionFactor) -> np.ndarray:
    U = f.U
    P = U.T @ U
    # exact symmetry, not just up to rounding
    return np.triu(P) + np.triu(P, 1).T


def _check_pair(x, c, f):
    x = np.asarray(x, dtype=float).ravel()
    c = np.asarray(c, dtype=float).ravel()
    if x.size != f.dim or c.size != f.dim:
        raise DimensionError(f"vectors of length {x.size}, {c.size} for D={f.dim}")
    return x, c


def mahalanobis_sq(x, c, f: PrecisionFactor) -> float:
    """(x - c)^T P (x - c), evaluated as ||U (x - c)||^2."""
    x, c = _check_pair(x, c, f)
    v = f.U @ (x - c)
    return float(v @ v)


def gaussian_kernel(x, c, f: PrecisionFactor) -> float:
    return float(np.exp(-0.5 * mahalanobis_sq(x, c, f)))


def sq_distances(X: np.ndarray, C: np.ndarray, f: PrecisionFactor) -> np.ndarray:
    """All pairwise squared Mahalanobis distances between rows of X and C."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if X.shape[1] != f.dim or C.shape[1] != f.dim:
        raise DimensionError(
            f"column counts {X.shape[1]} and {C.shape[1]} do not match D={f.dim}"
        )
    U = f.U
    A = X @ U.T
    B = C @ U.T
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * (A @ B.T)
    return np.maximum(d2, 0.0)


def kernel_matrix(X: np.ndarray, C: np.ndarray, f: PrecisionFactor) -> np.ndarray:
    """N x M matrix of kernel values between data rows and centers."""
    return np.exp(-0.5 * sq_distances(X, C, f))


def latent_factorized_kernel(z, z_c, gamma) -> float:
    """Kernel written as a product of independent terms along eigen-axes."""
    z = np.asarray(z, dtype=float).ravel()
    z_c = np.asarray(z_c, dtype=float).ravel()
    gamma = np.asarray(gamma, dtype=float).ravel()
    if not (z.size == z_c.size == gamma.size):
        raise DimensionError("z, z_c and gamma must have the same length")
    if np.any(gamma < 0):
        raise ValueError("eigenvalues must be nonnegative")
    return float(np.prod(np.exp(-0.5 * gamma * (z - z_c) ** 2)))
