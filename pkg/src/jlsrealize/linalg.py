"""Dense linear-algebra helpers shared by every other module.

All rank decisions in the package go through :func:`numerical_rank`, which
keeps the full singular spectrum so near-threshold calls can be audited.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_RANK_TOL = 1e-9


@dataclass(frozen=True)
class RankReport:
    rank: int
    singular_values: np.ndarray
    tol: float
    threshold: float

    @property
    def gap(self) -> float:
        """Ratio between the smallest kept and the largest discarded singular value.

        ``inf`` when nothing is discarded (or nothing is kept and the matrix is zero).
        """
        sv = self.singular_values
        if self.rank == 0 or self.rank >= sv.size:
            return float("inf")
        dropped = sv[self.rank]
        if dropped == 0.0:
            return float("inf")
        return float(sv[self.rank - 1] / dropped)

    def to_dict(self) -> dict:
        return {
            "rank": self.rank,
            "singular_values": self.singular_values.tolist(),
            "tol": self.tol,
            "threshold": self.threshold,
            "gap": self.gap,
        }


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product; block ``(i, j)`` of the result is ``a[i, j] * b``."""
    return np.kron(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def vec(a: np.ndarray) -> np.ndarray:
    """Stack the columns of ``a`` into a 1-D vector."""
    return np.asarray(a, dtype=float).reshape(-1, order="F")


def unvec(v: np.ndarray, rows: int, cols: int | None = None) -> np.ndarray:
    """Inverse of :func:`vec`."""
    cols = rows if cols is None else cols
    return np.asarray(v, dtype=float).reshape((rows, cols), order="F")


def numerical_rank(m: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> RankReport:
    """Count singular values above ``tol * sigma_max * max(rows, cols)``.

    A zero (or empty) matrix has rank 0.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        return RankReport(0, np.zeros(0), tol, 0.0)
    sv = np.linalg.svd(m, compute_uv=False)
    smax = sv[0] if sv.size else 0.0
    threshold = tol * smax * max(m.shape)
    rank = int(np.count_nonzero(sv > threshold)) if smax > 0 else 0
    return RankReport(rank, sv, tol, float(threshold))


def pinv(m: np.ndarray, tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Moore-Penrose pseudoinverse, dropping singular values at the rank threshold."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    u, sv, vt = np.linalg.svd(m, full_matrices=False)
    if sv.size == 0 or sv[0] == 0.0:
        return np.zeros(m.T.shape)
    keep = sv > tol * sv[0] * max(m.shape)
    inv = np.zeros_like(sv)
    inv[keep] = 1.0 / sv[keep]
    return (vt.T * inv) @ u.T


def spectral_radius(m: np.ndarray) -> float:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got shape {m.shape}")
    if m.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvals(m))))


def symmetrize(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    return 0.5 * (m + m.T)


def psd_project(m: np.ndarray) -> np.ndarray:
    """Nearest positive semidefinite matrix in Frobenius norm.

    The input is symmetrized first; negative eigenvalues are clipped to zero.
    """
    w, q = np.linalg.eigh(symmetrize(m))
    w = np.clip(w, 0.0, None)
    return symmetrize((q * w) @ q.T)


def symmetric_basis(n: int) -> np.ndarray:
    """Orthonormal basis of ``{vec(X) : X = X^T}`` as columns, shape ``(n*n, n(n+1)/2)``.

    Column order: diagonal entries first by index, then off-diagonal pairs
    ``i < j`` in row-major order.
    """
    cols = []
    for i in range(n):
        e = np.zeros((n, n))
        e[i, i] = 1.0
        cols.append(vec(e))
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n))
            e[i, j] = e[j, i] = 1.0 / np.sqrt(2.0)
            cols.append(vec(e))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def commutation_matrix(n: int) -> np.ndarray:
    """The permutation ``K`` with ``K vec(X) = vec(X^T)`` for ``n x n`` X."""
    k = np.zeros((n * n, n * n))
    for i in range(n):
        for j in range(n):
            k[i * n + j, j * n + i] = 1.0
    return k


def matrix_power(m: np.ndarray, k: int) -> np.ndarray:
    """``m**k`` by repeated multiplication (no eigendecomposition)."""
    out = np.eye(m.shape[0])
    for _ in range(k):
        out = out @ m
    return out
