"""Matrix completion by singular value thresholding (SVT).

The iterate Y lives on the observed support only and is handed to the
randomized inner solver as a sparse matrix, so the working set stays
proportional to the number of observed entries plus the low-rank factors.
A full-SVD inner route is kept alongside the randomized one for
desk-scale cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .decomposition import R3svdConfig, dominant_svd, rsvd_fixed_rank
from .linalg import frobenius_norm_sq
from .sampling import derive_seed

__all__ = [
    "ObservedEntries",
    "SvtConfig",
    "SvtResult",
    "DivergenceError",
    "shrink_singular_values",
    "svt_complete",
]


class DivergenceError(RuntimeError):
    """The SVT iteration blew up; the step size is too large."""


@dataclass(frozen=True)
class ObservedEntries:
    """Known entries of a partially observed rows x cols matrix.

    Index pairs are validated to be unique and in range; values must be
    finite.
    """

    rows: int
    cols: int
    row_idx: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"target shape must be positive, got {self.rows}x{self.cols}")
        ri = np.asarray(self.row_idx, dtype=np.int64)
        ci = np.asarray(self.col_idx, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if not (ri.shape == ci.shape == vals.shape) or ri.ndim != 1:
            raise ValueError("row_idx, col_idx and values must be 1-d and equally long")
        if ri.size:
            if ri.min() < 0 or ri.max() >= self.rows:
                raise ValueError("row index out of range")
            if ci.min() < 0 or ci.max() >= self.cols:
                raise ValueError("column index out of range")
            if not np.isfinite(vals).all():
                raise ValueError("observed values contain non-finite entries")
            flat = ri * self.cols + ci
            if np.unique(flat).size != flat.size:
                raise ValueError("duplicate (row, col) pairs in observed entries")
        object.__setattr__(self, "row_idx", ri)
        object.__setattr__(self, "col_idx", ci)
        object.__setattr__(self, "values", vals)

    @property
    def count(self) -> int:
        return int(self.values.size)

    @property
    def sample_fraction(self) -> float:
        return self.count / (self.rows * self.cols)

    @classmethod
    def from_triples(cls, rows: int, cols: int, triples) -> "ObservedEntries":
        """Build from an iterable of (i, j, value)."""
        triples = list(triples)
        ri = np.array([t[0] for t in triples], dtype=np.int64)
        ci = np.array([t[1] for t in triples], dtype=np.int64)
        vals = np.array([t[2] for t in triples], dtype=np.float64)
        return cls(rows, cols, ri, ci, vals)

    @classmethod
    def from_dense(cls, x, mask=None) -> "ObservedEntries":
        """Take the entries of ``x`` selected by ``mask`` (default: finite entries)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"expected a 2-d matrix, got shape {x.shape}")
        if mask is None:
            mask = np.isfinite(x)
        ri, ci = np.nonzero(mask)
        return cls(x.shape[0], x.shape[1], ri, ci, x[ri, ci])

    def to_sparse(self) -> sparse.csr_array:
        """The observed entries as a sparse matrix (zero off the support)."""
        return sparse.csr_array(
            (self.values, (self.row_idx, self.col_idx)), shape=(self.rows, self.cols)
        )

    def with_values(self, values: np.ndarray) -> sparse.csr_array:
        """Sparse matrix with the same support but the given values."""
        return sparse.csr_array(
            (values, (self.row_idx, self.col_idx)), shape=(self.rows, self.cols)
        )

    def sample_factors(self, u: np.ndarray, sigma: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Values of ``u @ diag(sigma) @ v.T`` at the observed positions."""
        if sigma.size == 0:
            return np.zeros(self.count)
        return np.einsum("ij,ij->i", u[self.row_idx] * sigma, v[self.col_idx])


@dataclass(frozen=True)
class SvtConfig:
    """SVT parameters.

    threshold  soft-threshold level tau applied to singular values; zero
               disables shrinkage (degenerate mode, useful for checks)
    step       gradient step delta on the observed residual
    max_iters  outer iteration cap
    rel_tol    stop once ||P(M - X)||_F / ||P(M)||_F falls below this
    inner      template for the inner solver: per step the block size is
               previous rank + inner.t, with inner.p oversampling and
               inner.q power rounds
    """

    threshold: float
    step: float
    max_iters: int = 1000
    rel_tol: float = 1e-4
    inner: R3svdConfig = field(default_factory=lambda: R3svdConfig(t=5, p=5, q=2, tau=1.0))

    def validate(self) -> None:
        if self.threshold < 0.0:
            raise ValueError(f"threshold must be >= 0, got {self.threshold}")
        if self.step <= 0.0:
            raise ValueError(f"step must be > 0, got {self.step}")
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not 0.0 < self.rel_tol < 1.0:
            raise ValueError(f"rel_tol must be in (0, 1), got {self.rel_tol}")

    @classmethod
    def defaults_for(cls, obs: ObservedEntries, **overrides) -> "SvtConfig":
        """Standard parameter choices scaled to the problem instance:
        threshold 5 * sqrt(m * n) and step 1.2 / sample_fraction."""
        params = dict(
            threshold=5.0 * math.sqrt(obs.rows * obs.cols),
            step=1.2 / obs.sample_fraction,
        )
        params.update(overrides)
        return cls(**params)


@dataclass
class SvtResult:
    """Completed matrix plus iteration accounting."""

    matrix: np.ndarray
    rank: int
    iterations: int
    residuals: np.ndarray
    converged: bool


def shrink_singular_values(sigma, threshold: float) -> np.ndarray:
    """Soft-threshold: componentwise max(sigma - threshold, 0)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    if threshold < 0.0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    if sigma.size and sigma.min() < 0.0:
        raise ValueError("singular values must be non-negative")
    return np.maximum(sigma - threshold, 0.0)


def _top_singular_value(y: sparse.csr_array, seed: int) -> float:
    """Cheap estimate of sigma_1 via a power-iterated rank-1 sketch."""
    mn = min(y.shape)
    fac = rsvd_fixed_rank(y, 1, p=min(7, mn - 1), q=2, seed=seed)
    return float(fac.sigma[0])


def _inner_block_size(prev_rank: int, inner: R3svdConfig, mn: int) -> tuple[int, int]:
    """Block size previous rank + inner.t, clamped so t + p <= min(m, n)."""
    t = prev_rank + inner.t
    p = inner.p
    if t + p > mn:
        t = max(1, mn - p)
    if t + p > mn:
        p = mn - t
    return t, p


def svt_complete(
    obs: ObservedEntries,
    cfg: SvtConfig | None = None,
    seed: int = 0,
    inner_solver: str = "r3svd",
) -> SvtResult:
    """Recover a low-rank matrix from its observed entries.

    Iterates the classic SVT scheme: warm-start Y on the observed support,
    shrink the dominant singular values of Y, then take a gradient step on
    the observed residual. The dominant triplets come from
    :func:`r3svd.decomposition.dominant_svd` with the shrink threshold as
    the singular-value floor (``inner_solver="exact"`` swaps in a dense
    full SVD, for cross-checking on small instances).

    Returns an :class:`SvtResult`; non-convergence within ``max_iters`` is
    flagged, not raised. A residual exceeding ten times the initial one
    raises :class:`DivergenceError` (the step size is too large).
    """
    if obs.count == 0:
        raise ValueError("no observed entries")
    if inner_solver not in ("r3svd", "exact"):
        raise ValueError(f"unknown inner solver '{inner_solver}'")
    cfg = cfg if cfg is not None else SvtConfig.defaults_for(obs)
    cfg.validate()

    m, n = obs.rows, obs.cols
    mn = min(m, n)
    norm_obs = math.sqrt(math.fsum(float(v) * float(v) for v in obs.values))
    if norm_obs == 0.0:
        return SvtResult(np.zeros((m, n)), 0, 0, np.empty(0), True)

    sigma1 = _top_singular_value(obs.to_sparse(), derive_seed(seed, 0))
    k0 = max(1, math.ceil(cfg.threshold / (cfg.step * sigma1))) if sigma1 > 0 else 1
    y_values = (k0 * cfg.step) * obs.values

    empty = (np.zeros((m, 0)), np.zeros(0), np.zeros((n, 0)))
    best = (math.inf, empty, 0)
    last = (empty, 0)
    residuals: list[float] = []
    converged = False
    inner_failed = False
    prev_rank = 0

    for it in range(1, cfg.max_iters + 1):
        y = obs.with_values(y_values)
        if inner_solver == "exact":
            u, sig, vt = np.linalg.svd(y.toarray(), full_matrices=False)
            v = vt.T
        else:
            t, p = _inner_block_size(prev_rank, cfg.inner, mn)
            fac, hist = dominant_svd(
                y, cfg.threshold, t=t, p=p, q=cfg.inner.q,
                seed=derive_seed(seed, it),
            )
            u, sig, v = fac.u, fac.sigma, fac.v
            inner_failed = not hist.converged

        shrunk = shrink_singular_values(sig, cfg.threshold)
        nz = shrunk > 0.0
        rank = int(np.count_nonzero(nz))
        u_x, s_x, v_x = u[:, nz], shrunk[nz], v[:, nz]

        x_obs = obs.sample_factors(u_x, s_x, v_x)
        residual_vec = obs.values - x_obs
        residual = math.sqrt(
            math.fsum(float(r) * float(r) for r in residual_vec)
        ) / norm_obs
        residuals.append(residual)
        last = ((u_x, s_x, v_x), rank)
        if residual < best[0]:
            best = (residual, (u_x, s_x, v_x), rank)

        if residual <= cfg.rel_tol:
            converged = True
            break
        if inner_failed:
            break
        if len(residuals) > 1 and residual > 10.0 * residuals[0]:
            raise DivergenceError(
                f"observed residual {residual:.3e} exceeds 10x the initial "
                f"{residuals[0]:.3e} after {it} iterations; "
                f"try a smaller step (delta = {cfg.step:g})"
            )

        y_values = y_values + cfg.step * residual_vec
        prev_rank = rank

    if converged:
        (u_x, s_x, v_x), rank = last
    else:
        _, (u_x, s_x, v_x), rank = best
    x = (u_x * s_x) @ v_x.T if s_x.size else np.zeros((m, n))
    return SvtResult(x, rank, len(residuals), np.asarray(residuals), converged)
