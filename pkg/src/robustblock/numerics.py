"""Dense symmetric linear algebra used throughout the package.

Everything here operates on small, well-scaled symmetric positive definite
matrices (correlation and covariance blocks), so a Cholesky sweep gives the
inverse, the determinant and the definiteness check in one factorization.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.linalg import lapack

__all__ = [
    "NotPositiveDefinite",
    "sym_matrix",
    "cholesky",
    "direct_sum",
    "pd_inverse",
    "log_det",
    "is_positive_definite",
    "PD_TOL",
]

PD_TOL = 1e-12


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a Cholesky factorization breaks down.

    Attributes
    ----------
    pivot : int
        Zero-based index of the first non-positive pivot.
    """

    def __init__(self, pivot: int, message: str | None = None):
        self.pivot = pivot
        if message is None:
            message = f"matrix is not positive definite (pivot {pivot} failed)"
        super().__init__(message)


def sym_matrix(a, *, atol: float = 1e-10) -> np.ndarray:
    """Return `a` as a float array with exactly symmetric entries.

    Asymmetry larger than `atol` (relative to the largest entry) is an error;
    smaller round-off is removed by averaging with the transpose.
    """
    a = np.array(a, dtype=float, ndmin=2)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise ValueError(f"expected a non-empty square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > atol * scale:
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def cholesky(a: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of `a`, raising NotPositiveDefinite with the pivot."""
    c, info = lapack.dpotrf(np.asarray(a, dtype=float), lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefinite(info - 1)
    if info < 0:
        raise ValueError(f"illegal argument {-info} passed to dpotrf")
    return c


def direct_sum(blocks: Sequence[np.ndarray]) -> np.ndarray:
    """Block-diagonal composition ``blocks[0] (+) blocks[1] (+) ...``."""
    if len(blocks) == 0:
        raise ValueError("direct_sum needs at least one block")
    mats = [np.array(m, dtype=float, ndmin=2) for m in blocks]
    dim = sum(m.shape[0] for m in mats)
    out = np.zeros((dim, dim))
    i = 0
    for m in mats:
        k = m.shape[0]
        out[i:i + k, i:i + k] = m
        i += k
    return out


def pd_inverse(a: np.ndarray) -> np.ndarray:
    c = cholesky(a)
    inv, info = lapack.dpotri(c, lower=1)
    if info != 0:
        raise NotPositiveDefinite(max(info - 1, 0))
    inv = np.tril(inv)
    return inv + np.tril(inv, -1).T


def log_det(a: np.ndarray) -> float:
    """Natural log of det(a) for symmetric positive definite `a`."""
    c = cholesky(a)
    return 2.0 * float(np.sum(np.log(np.diag(c))))


def is_positive_definite(a: np.ndarray, tol: float = PD_TOL) -> bool:
    """True iff every Cholesky pivot of `a` exceeds `tol`."""
    try:
        c = cholesky(a)
    except NotPositiveDefinite:
        return False
    return bool(np.all(np.diag(c) ** 2 > tol))
