"""Seeded Gaussian sampling blocks and orthogonal-complement updates.

The sampler draws from a counter-based generator (Philox) constructed
fresh on every call, so a seed fully determines every entry and no
mutable generator state is ever shared. Projections are always computed
as ``m - v @ (v.T @ m)``; the dense n x n projector is never formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "GaussianBlock",
    "gaussian_matrix",
    "derive_seed",
    "project_out",
    "update_gaussian_block",
]

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class GaussianBlock:
    """A sampling block together with the seed that generated it.

    Generation 0 is the raw i.i.d. N(0, 1) draw; generation i >= 1 has
    been projected against i basis blocks and is orthogonal to all of
    them (entries stay marginally normal, with variance shrunk by the
    projection).
    """

    matrix: np.ndarray
    seed: int
    generation: int = 0


def gaussian_matrix(rows: int, cols: int, seed: int) -> GaussianBlock:
    """Draw a rows x cols block of i.i.d. standard normal entries.

    Same seed, same block, bit for bit.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"block shape must be positive, got {rows}x{cols}")
    rng = np.random.Generator(np.random.Philox(key=seed & _SEED_MASK))
    return GaussianBlock(rng.standard_normal((rows, cols)), seed, generation=0)


def derive_seed(seed: int, index: int) -> int:
    """Deterministically derive an independent child seed for sub-draw ``index``."""
    ss = np.random.SeedSequence(entropy=seed & _SEED_MASK, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


def project_out(basis_v: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Remove from each column of ``m`` its component inside span(basis_v).

    ``basis_v`` must have orthonormal columns; a zero-column basis is the
    empty projection and returns ``m`` unchanged. The association order
    ``m - basis_v @ (basis_v.T @ m)`` is fixed: the working set stays at
    block width, never n x n.
    """
    basis_v = np.asarray(basis_v, dtype=np.float64)
    m = np.asarray(m, dtype=np.float64)
    if basis_v.ndim != 2 or m.ndim != 2:
        raise ValueError("basis and target must be 2-d")
    if basis_v.shape[0] != m.shape[0]:
        raise ValueError(
            f"row mismatch: basis has shape {basis_v.shape}, target has shape {m.shape}"
        )
    if basis_v.shape[1] == 0:
        return m.copy()
    return m - basis_v @ (basis_v.T @ m)


def update_gaussian_block(g: GaussianBlock, v_new: np.ndarray) -> GaussianBlock:
    """Advance the sampling block one generation: G <- G - V (V^T G).

    ``v_new`` must be orthonormal and orthogonal to every block previously
    applied to ``g``; the short recursion then equals projecting the
    original draw against the full accumulated basis in one shot.
    """
    matrix = project_out(v_new, g.matrix)
    return GaussianBlock(matrix, g.seed, g.generation + 1)
