"""Incremental rank-revealing randomized SVD and its fixed-rank baselines.

Three solvers share the kernels in :mod:`r3svd.linalg`:

* :func:`rsvd_fixed_rank` -- classic one-shot randomized SVD at a given rank.
* :func:`r3svd` -- grows the approximation in t-sized blocks sampled from
  the orthogonal complement of the factors found so far, stopping once the
  captured energy share reaches a threshold. The per-iteration working set
  is a constant t+p block columns regardless of the final rank.
* :func:`restarting_rsvd` -- baseline that reruns the fixed-rank solver at
  increasing rank from scratch until the energy target is met.

:func:`dominant_svd` reuses the incremental loop with a singular-value
floor instead of an energy target; it is the inner engine of the SVT
completion solver.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .linalg import block_svd, frobenius_norm_sq, householder_qr
from .sampling import derive_seed, gaussian_matrix, update_gaussian_block

__all__ = [
    "LowRankFactors",
    "R3svdConfig",
    "IterationRecord",
    "ApproximationHistory",
    "energy_percentage",
    "rsvd_fixed_rank",
    "r3svd",
    "dominant_svd",
    "restarting_rsvd",
]

# Columns whose R diagonal falls below this multiple of ||A||_F are treated
# as numerically exhausted and dropped for the iteration.
_RANK_DROP_REL = 1e-13


@dataclass(frozen=True)
class LowRankFactors:
    """Low-rank factorization ``u @ diag(sigma) @ v.T`` with estimated rank.

    ``u`` (m x k) and ``v`` (n x k) have orthonormal columns; ``sigma`` is
    non-negative and, after finalization, non-increasing.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    rank: int

    def reconstruct(self) -> np.ndarray:
        """Dense ``u @ diag(sigma) @ v.T``."""
        return (self.u * self.sigma) @ self.v.T


@dataclass(frozen=True)
class R3svdConfig:
    """Parameters of the incremental solver.

    t      sampling size per iteration (columns appended per step)
    p      oversampling columns beyond t (computed, then discarded)
    q      power-scheme rounds per iteration (0 disables the scheme)
    maxit  outer iteration cap; None means ceil(min(m, n) / t) so the
           solver can in principle reach full rank
    tau    energy-share threshold in (0, 1]
    """

    t: int = 15
    p: int = 5
    q: int = 0
    maxit: int | None = None
    tau: float = 0.99

    def validate(self, m: int, n: int) -> None:
        """Check the parameter bundle against a target shape."""
        if self.t < 1:
            raise ValueError(f"sampling size t must be >= 1, got {self.t}")
        if self.p < 0:
            raise ValueError(f"oversampling p must be >= 0, got {self.p}")
        if self.q < 0:
            raise ValueError(f"power number q must be >= 0, got {self.q}")
        if self.maxit is not None and self.maxit < 1:
            raise ValueError(f"maxit must be >= 1, got {self.maxit}")
        if not 0.0 < self.tau <= 1.0:
            raise ValueError(f"energy threshold tau must be in (0, 1], got {self.tau}")
        if self.t + self.p > min(m, n):
            raise ValueError(
                f"t + p = {self.t + self.p} exceeds min(m, n) = {min(m, n)}"
            )

    def resolved_maxit(self, m: int, n: int) -> int:
        return self.maxit if self.maxit is not None else math.ceil(min(m, n) / self.t)


@dataclass(frozen=True)
class IterationRecord:
    """One outer iteration: what was appended and what it cost.

    ``block_width`` is the widest intermediate block allocated during the
    iteration (sketch, basis, or projected block) measured in block
    columns -- the memory audit. ``matmul_cols`` counts sketch columns
    multiplied against the target matrix or its transpose.
    """

    index: int
    sigmas: np.ndarray
    energy: np.ndarray
    block_width: int
    matmul_cols: int
    wall_time_s: float


@dataclass
class ApproximationHistory:
    """Per-run accounting: appended values, energy trace, block audit."""

    fro_sq: float
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    stop_reason: str = ""
    sort_order: np.ndarray | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def singular_values(self) -> np.ndarray:
        """Appended singular values in append order."""
        if not self.records:
            return np.empty(0)
        return np.concatenate([r.sigmas for r in self.records])

    @property
    def energy_trace(self) -> np.ndarray:
        """Cumulative energy estimate after each appended value."""
        if not self.records:
            return np.empty(0)
        return np.concatenate([r.energy for r in self.records])

    @property
    def energy(self) -> float:
        """Final energy share; a zero matrix is vacuously complete."""
        trace = self.energy_trace
        if trace.size:
            return float(trace[-1])
        return 1.0 if self.fro_sq == 0.0 else 0.0

    @property
    def block_audit(self) -> list[int]:
        return [r.block_width for r in self.records]

    @property
    def total_matmul_cols(self) -> int:
        return sum(r.matmul_cols for r in self.records)

    @property
    def wall_time_s(self) -> float:
        return sum(r.wall_time_s for r in self.records)


def energy_percentage(sigma_partial, fro_sq: float) -> float:
    """Share of the total energy ||A||_F^2 carried by the given values.

    The squares are combined with exact (compensated) summation: the
    stopping rule compares numbers of similar magnitude near tau and must
    not be flipped by accumulation error.
    """
    if fro_sq <= 0.0:
        raise ValueError(f"fro_sq must be positive, got {fro_sq}")
    total = math.fsum(float(s) * float(s) for s in np.asarray(sigma_partial).ravel())
    return total / fro_sq


def _empty_factors(m: int, n: int) -> LowRankFactors:
    return LowRankFactors(np.empty((m, 0)), np.empty(0), np.empty((n, 0)), 0)


def _check_operand(a):
    if sparse.issparse(a):
        return a
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"target must be a 2-d matrix, got shape {a.shape}")
    return a


def _qr_keep(block: np.ndarray, drop_tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Economy QR that drops numerically dead columns.

    Returns the kept columns of Q and the boolean keep mask over the input
    columns (diagonal of R at or above ``drop_tol``). When nothing is
    dropped, Q is returned as produced.
    """
    q, r = householder_qr(block)
    keep = np.diag(r) >= drop_tol
    if keep.all():
        return q, keep
    return q[:, keep], keep


def _incremental_svd(
    a,
    t: int,
    p: int,
    q: int,
    maxit: int,
    tau: float,
    seed: int,
    sigma_floor: float | None = None,
) -> tuple[LowRankFactors, ApproximationHistory]:
    """Shared loop behind :func:`r3svd` and :func:`dominant_svd`.

    Stops when the cumulative energy share reaches ``tau`` (the crossing
    value is kept) or, if ``sigma_floor`` is given, when an appended value
    falls below the floor (that value is excluded). Either stop counts as
    convergence; running out of iterations does not.
    """
    m, n = a.shape
    fro_sq = frobenius_norm_sq(a)
    history = ApproximationHistory(fro_sq=fro_sq)
    if fro_sq == 0.0:
        history.converged = True
        history.stop_reason = "zero-matrix"
        history.sort_order = np.empty(0, dtype=np.intp)
        return _empty_factors(m, n), history

    drop_tol = _RANK_DROP_REL * math.sqrt(fro_sq)
    width = t + p
    g = gaussian_matrix(n, width, seed)
    u_blocks: list[np.ndarray] = []
    v_blocks: list[np.ndarray] = []
    sig_blocks: list[np.ndarray] = []
    kept: list[float] = []
    stop = False

    for i in range(maxit):
        tick = time.perf_counter()
        widths = [g.matrix.shape[1]]
        cols = 0
        u_all = np.hstack(u_blocks) if u_blocks else np.empty((m, 0))
        v_all = np.hstack(v_blocks) if v_blocks else np.empty((n, 0))

        y = a @ g.matrix
        cols += g.matrix.shape[1]
        q_block, _ = _qr_keep(y, drop_tol)
        widths.append(q_block.shape[1])
        exhausted = q_block.shape[1] == 0

        for _ in range(q):
            if exhausted:
                break
            z = a.T @ q_block
            cols += q_block.shape[1]
            z = z - v_all @ (v_all.T @ z)
            q_block, _ = _qr_keep(z, drop_tol)
            widths.append(q_block.shape[1])
            if q_block.shape[1] == 0:
                exhausted = True
                break
            z = a @ q_block
            cols += q_block.shape[1]
            z = z - u_all @ (u_all.T @ z)
            q_block, _ = _qr_keep(z, drop_tol)
            widths.append(q_block.shape[1])
            exhausted = q_block.shape[1] == 0

        if exhausted:
            history.records.append(
                IterationRecord(i, np.empty(0), np.empty(0), max(widths), cols,
                                time.perf_counter() - tick)
            )
            history.converged = True
            history.stop_reason = "exhausted"
            break

        b = q_block.T @ a
        cols += q_block.shape[1]
        widths.append(b.shape[0])
        ub, sig, vb = block_svd(b)
        ub = q_block @ ub
        w = vb - v_all @ (v_all.T @ vb)
        v_new, keep = _qr_keep(w, drop_tol)
        widths.append(v_new.shape[1])
        if not keep.all():
            ub = ub[:, keep]
            sig = sig[keep]
        if v_new.shape[1] == 0:
            history.records.append(
                IterationRecord(i, np.empty(0), np.empty(0), max(widths), cols,
                                time.perf_counter() - tick)
            )
            history.converged = True
            history.stop_reason = "exhausted"
            break

        take = min(t, v_new.shape[1])
        sig_blk = sig[:take]
        phis: list[float] = []
        stop_at = take
        for j in range(take):
            value = float(sig_blk[j])
            if sigma_floor is not None and value < sigma_floor:
                stop_at = j
                stop = True
                history.converged = True
                history.stop_reason = "sigma-floor"
                break
            kept.append(value)
            phi = energy_percentage(kept, fro_sq)
            phis.append(phi)
            if phi >= tau:
                stop_at = j + 1
                stop = True
                history.converged = True
                history.stop_reason = "energy"
                break

        u_blk = ub[:, :stop_at]
        sig_blk = sig_blk[:stop_at]
        v_blk = v_new[:, :stop_at]
        u_blocks.append(u_blk)
        sig_blocks.append(sig_blk)
        v_blocks.append(v_blk)
        history.records.append(
            IterationRecord(i, np.asarray(sig_blk, dtype=np.float64).copy(),
                            np.asarray(phis, dtype=np.float64), max(widths), cols,
                            time.perf_counter() - tick)
        )
        if stop:
            break
        g = update_gaussian_block(g, v_blk)

    if not history.converged:
        history.stop_reason = "maxit"

    if not sig_blocks or sum(blk.size for blk in sig_blocks) == 0:
        history.sort_order = np.empty(0, dtype=np.intp)
        return _empty_factors(m, n), history

    u = np.hstack(u_blocks)
    v = np.hstack(v_blocks)
    sig = np.concatenate(sig_blocks)
    order = np.argsort(-sig, kind="stable")
    history.sort_order = order
    return LowRankFactors(u[:, order], sig[order], v[:, order], int(sig.size)), history


def r3svd(
    a, cfg: R3svdConfig | None = None, seed: int = 0
) -> tuple[LowRankFactors, ApproximationHistory]:
    """Incrementally build a low-rank SVD until an energy target is met.

    Each outer iteration sketches the orthogonal complement of the right
    factors found so far with a t+p column Gaussian block, extracts t new
    singular triplets, and checks the cumulative energy share after every
    appended value; the final block is truncated at the crossing. With
    ``cfg.q > 0`` each sketch is refined by power rounds projected away
    from the accumulated factors. The returned factors are sorted by
    singular value; a run that exhausts ``maxit`` before reaching ``tau``
    comes back with ``history.converged`` False rather than an error, so
    callers still get the partial factors.

    Returns ``(factors, history)``; the history carries the per-iteration
    energy trace, the block-width audit, and matmul-column counts.
    """
    cfg = cfg if cfg is not None else R3svdConfig()
    a = _check_operand(a)
    m, n = a.shape
    cfg.validate(m, n)
    return _incremental_svd(
        a, cfg.t, cfg.p, cfg.q, cfg.resolved_maxit(m, n), cfg.tau, seed
    )


def dominant_svd(
    a,
    sigma_floor: float,
    t: int,
    p: int = 5,
    q: int = 2,
    maxit: int | None = None,
    seed: int = 0,
) -> tuple[LowRankFactors, ApproximationHistory]:
    """All singular triplets with value at or above ``sigma_floor``.

    Runs the incremental loop with the energy threshold disabled
    (tau = 1.0) and stops once an appended value dips below the floor;
    values below the floor are never kept. This is the inner engine the
    SVT completion solver uses, where an energy share is the wrong
    stopping criterion.
    """
    if sigma_floor < 0.0:
        raise ValueError(f"sigma_floor must be >= 0, got {sigma_floor}")
    a = _check_operand(a)
    m, n = a.shape
    cfg = R3svdConfig(t=t, p=p, q=q, maxit=maxit, tau=1.0)
    cfg.validate(m, n)
    return _incremental_svd(
        a, t, p, q, cfg.resolved_maxit(m, n), 1.0, seed, sigma_floor=sigma_floor
    )


def rsvd_fixed_rank(a, k: int, p: int = 5, q: int = 0, seed: int = 0) -> LowRankFactors:
    """One-shot randomized SVD at a fixed target rank ``k``.

    Sketches with a k+p column Gaussian block, optionally sharpens it with
    ``q`` power rounds (re-orthonormalizing between half-steps), factors
    the short-and-wide projection, and keeps the first k triplets.
    Deterministic for a fixed seed.
    """
    a = _check_operand(a)
    m, n = a.shape
    if k < 1:
        raise ValueError(f"target rank k must be >= 1, got {k}")
    if p < 0:
        raise ValueError(f"oversampling p must be >= 0, got {p}")
    if q < 0:
        raise ValueError(f"power number q must be >= 0, got {q}")
    if k + p > min(m, n):
        raise ValueError(f"k + p = {k + p} exceeds min(m, n) = {min(m, n)}")

    g = gaussian_matrix(n, k + p, seed)
    y = a @ g.matrix
    for _ in range(q):
        q_block, _ = householder_qr(y)
        y = a.T @ q_block
        q_block, _ = householder_qr(y)
        y = a @ q_block
    q_block, _ = householder_qr(y)
    b = q_block.T @ a
    ub, sig, vb = block_svd(b)
    ub = q_block @ ub
    return LowRankFactors(
        np.ascontiguousarray(ub[:, :k]), sig[:k].copy(),
        np.ascontiguousarray(vb[:, :k]), k,
    )


def restarting_rsvd(
    a,
    t0: int,
    delta_t: int,
    p: int = 5,
    tau: float = 0.99,
    max_rank: int | None = None,
    seed: int = 0,
) -> tuple[LowRankFactors, ApproximationHistory]:
    """Baseline: rerun fixed-rank RSVD at growing rank until the target.

    Trials run at k = t0, t0 + delta_t, ... from fresh samples each time;
    a trial that reaches the energy threshold is returned whole and every
    earlier trial is discarded. The history still records all trials (rank
    attempted, k+p block width, matmul columns) so benchmarks account for
    the wasted work. Exceeding ``max_rank`` (default min(m, n) - p) flags
    non-convergence instead of raising.
    """
    a = _check_operand(a)
    m, n = a.shape
    if t0 < 1:
        raise ValueError(f"initial rank t0 must be >= 1, got {t0}")
    if delta_t < 1:
        raise ValueError(f"rank increment delta_t must be >= 1, got {delta_t}")
    if p < 0:
        raise ValueError(f"oversampling p must be >= 0, got {p}")
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"energy threshold tau must be in (0, 1], got {tau}")
    if max_rank is None:
        max_rank = min(m, n) - p
    if t0 + p > min(m, n):
        raise ValueError(f"t0 + p = {t0 + p} exceeds min(m, n) = {min(m, n)}")

    fro_sq = frobenius_norm_sq(a)
    history = ApproximationHistory(fro_sq=fro_sq)
    if fro_sq == 0.0:
        history.converged = True
        history.stop_reason = "zero-matrix"
        return _empty_factors(m, n), history

    factors = _empty_factors(m, n)
    k = t0
    trial = 0
    while k <= max_rank and k + p <= min(m, n):
        tick = time.perf_counter()
        factors = rsvd_fixed_rank(a, k, p, 0, derive_seed(seed, trial))
        phis = np.array(
            [energy_percentage(factors.sigma[: j + 1], fro_sq) for j in range(k)]
        )
        history.records.append(
            IterationRecord(trial, factors.sigma.copy(), phis, k + p,
                            2 * (k + p), time.perf_counter() - tick)
        )
        if phis[-1] >= tau:
            history.converged = True
            history.stop_reason = "energy"
            return factors, history
        k += delta_t
        trial += 1

    history.stop_reason = "max-rank"
    return factors, history
