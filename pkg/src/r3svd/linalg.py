"""Dense block kernels: products, economy QR, small SVD, Frobenius energy.

All routines operate on plain float64 ndarrays (C order) and treat their
inputs as immutable. ``frobenius_norm_sq`` additionally accepts scipy
sparse matrices, which is the one place sparse data enters the library
(matrix completion keeps its iterate on the observed support).
"""

from __future__ import annotations

import numpy as np
from scipy import sparse

__all__ = [
    "as_matrix",
    "matmul",
    "householder_qr",
    "block_svd",
    "frobenius_norm_sq",
]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce ``a`` to a finite float64 2-d array.

    Used at I/O and CLI boundaries; raises ValueError on wrong rank or
    NaN/Inf entries.
    """
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-d, got shape {m.shape}")
    if m.size and not np.isfinite(m).all():
        raise ValueError(f"{name} contains non-finite entries")
    return m


def matmul(a, b, transpose_a: bool = False, transpose_b: bool = False) -> np.ndarray:
    """Dense product with optional transposition of either operand.

    Raises ValueError naming both operand shapes when the inner dimensions
    disagree after the transpose flags are applied.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError(f"operands must be 2-d, got shapes {a.shape} and {b.shape}")
    left = a.T if transpose_a else a
    right = b.T if transpose_b else b
    if left.shape[1] != right.shape[0]:
        la = f"{a.shape}^T" if transpose_a else f"{a.shape}"
        lb = f"{b.shape}^T" if transpose_b else f"{b.shape}"
        raise ValueError(f"dimension mismatch: cannot multiply {la} by {lb}")
    return left @ right


def householder_qr(m) -> tuple[np.ndarray, np.ndarray]:
    """Economy QR of a tall block via Householder reflections.

    Returns ``(q, r)`` where ``q`` is rows x cols with orthonormal columns
    and ``r`` is cols x cols upper triangular with a non-negative diagonal
    (the sign fix makes the factorization deterministic across runs, which
    the seeded golden tests rely on). Rank-deficient input is permitted;
    callers inspect the diagonal of ``r``.
    """
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d block, got shape {m.shape}")
    rows, cols = m.shape
    if rows < cols:
        raise ValueError(f"economy QR needs rows >= cols, got {rows}x{cols}")
    q, r = np.linalg.qr(m, mode="reduced")
    signs = np.where(np.diag(r) < 0.0, -1.0, 1.0)
    return q * signs, r * signs[:, None]


def block_svd(b) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Economy SVD of a short-and-wide block (rows <= cols).

    Returns ``(u, sigma, v)`` with ``u`` square orthogonal (s x s), ``sigma``
    non-negative and non-increasing of length s, and ``v`` cols x s with
    orthonormal columns, such that ``u @ diag(sigma) @ v.T`` reconstructs
    the input.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 2:
        raise ValueError(f"expected a 2-d block, got shape {b.shape}")
    rows, cols = b.shape
    if rows > cols:
        raise ValueError(f"block SVD expects rows <= cols, got {rows}x{cols}")
    u, sigma, vt = np.linalg.svd(b, full_matrices=False)
    return u, sigma, vt.T


def frobenius_norm_sq(m) -> float:
    """Sum of squared entries, accumulated in extended precision.

    Squares are formed in float64 and summed in longdouble so the result
    keeps a relative error well under 1e-13; energy-threshold stopping
    compares numbers of similar magnitude and must not be perturbed by
    naive accumulation. Accepts dense arrays and scipy sparse matrices.
    """
    if sparse.issparse(m):
        values = np.asarray(m.data, dtype=np.float64).ravel()
    else:
        values = np.asarray(m, dtype=np.float64).ravel()
    if values.size == 0:
        return 0.0
    return float(np.sum(np.square(values), dtype=np.longdouble))
