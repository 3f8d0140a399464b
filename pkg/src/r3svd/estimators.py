"""scikit-learn style estimators wrapping the functional solvers.

These classes exist so the solvers compose with the wider ecosystem
(pipelines, grid search, clone). Unlike the functional layer, which
rejects parameter bundles that do not fit the target shape, the
estimators clamp block sizes to the data so they accept whatever a
pipeline feeds them.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .completion import ObservedEntries, R3svdConfig, SvtConfig, svt_complete
from .decomposition import r3svd, rsvd_fixed_rank

__all__ = ["RankRevealingSVD", "RandomizedSVD", "SVTImputer"]


def _clamp_block(t: int, p: int, mn: int) -> tuple[int, int]:
    """Shrink (t, p) so t + p fits min(m, n) while keeping t >= 1."""
    p = min(p, max(0, mn - 1))
    t = max(1, min(t, mn - p))
    return t, p


def _seed_of(random_state) -> int:
    if random_state is None:
        return 0
    return int(random_state)


class RankRevealingSVD(TransformerMixin, BaseEstimator):
    """Truncated SVD whose rank is discovered from an energy target.

    Fitting runs the incremental randomized solver until the approximation
    carries at least ``energy`` of the squared Frobenius norm of X, then
    exposes the right singular vectors as ``components_`` like
    :class:`sklearn.decomposition.TruncatedSVD`.

    Parameters
    ----------
    energy : float in (0, 1], share of squared Frobenius norm to capture.
    block_size : int, singular triplets appended per iteration.
    n_oversamples : int, extra sketch columns per iteration.
    n_power_iter : int, power-scheme rounds per iteration.
    max_iter : int or None, outer iteration cap (None lets the solver
        reach full rank).
    random_state : int or None, seed for the Gaussian sketches.

    Attributes
    ----------
    components_ : ndarray of shape (rank_, n_features)
    singular_values_ : ndarray of shape (rank_,)
    rank_ : int, discovered rank.
    energy_ : float, energy share actually captured.
    converged_ : bool, False when the iteration cap was hit first.
    history_ : per-iteration accounting from the solver.
    """

    def __init__(self, energy=0.99, block_size=15, n_oversamples=5,
                 n_power_iter=0, max_iter=None, random_state=0):
        self.energy = energy
        self.block_size = block_size
        self.n_oversamples = n_oversamples
        self.n_power_iter = n_power_iter
        self.max_iter = max_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = validate_data(self, X, ensure_min_samples=1, ensure_min_features=1)
        t, p = _clamp_block(self.block_size, self.n_oversamples, min(X.shape))
        cfg = R3svdConfig(t=t, p=p, q=self.n_power_iter,
                          maxit=self.max_iter, tau=self.energy)
        factors, history = r3svd(X, cfg, seed=_seed_of(self.random_state))
        self.components_ = factors.v.T
        self.singular_values_ = factors.sigma
        self.left_vectors_ = factors.u
        self.rank_ = factors.rank
        self.energy_ = history.energy
        self.converged_ = history.converged
        self.history_ = history
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = validate_data(self, X, reset=False)
        return X @ self.components_.T

    def inverse_transform(self, X):
        check_is_fitted(self, "components_")
        X = np.asarray(X, dtype=np.float64)
        return X @ self.components_


class RandomizedSVD(TransformerMixin, BaseEstimator):
    """Fixed-rank randomized SVD transformer (Gaussian sketching).

    The classic one-shot solver at ``n_components``; the baseline the
    rank-revealing estimator is measured against.
    """

    def __init__(self, n_components=2, n_oversamples=5, n_power_iter=0,
                 random_state=0):
        self.n_components = n_components
        self.n_oversamples = n_oversamples
        self.n_power_iter = n_power_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = validate_data(self, X, ensure_min_samples=1, ensure_min_features=1)
        k, p = _clamp_block(self.n_components, self.n_oversamples, min(X.shape))
        factors = rsvd_fixed_rank(X, k, p, self.n_power_iter,
                                  seed=_seed_of(self.random_state))
        self.components_ = factors.v.T
        self.singular_values_ = factors.sigma
        self.left_vectors_ = factors.u
        self.rank_ = factors.rank
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = validate_data(self, X, reset=False)
        return X @ self.components_.T

    def inverse_transform(self, X):
        check_is_fitted(self, "components_")
        X = np.asarray(X, dtype=np.float64)
        return X @ self.components_


class SVTImputer(TransformerMixin, BaseEstimator):
    """Fill missing entries of a low-rank matrix by singular value
    thresholding.

    Missing entries are NaN. Completion is transductive: ``fit`` solves
    for the matrix it was given and ``transform`` fills the NaN positions
    of a matrix of the same shape from that solution.

    Parameters follow :class:`r3svd.completion.SvtConfig`; ``threshold``
    and ``step`` default to the standard instance-scaled choices when
    None.
    """

    def __init__(self, threshold=None, step=None, rel_tol=1e-4, max_iter=1000,
                 block_growth=5, n_oversamples=5, n_power_iter=2,
                 random_state=0):
        self.threshold = threshold
        self.step = step
        self.rel_tol = rel_tol
        self.max_iter = max_iter
        self.block_growth = block_growth
        self.n_oversamples = n_oversamples
        self.n_power_iter = n_power_iter
        self.random_state = random_state

    def fit(self, X, y=None):
        X = validate_data(self, X, ensure_all_finite="allow-nan",
                          ensure_min_samples=1, ensure_min_features=1)
        obs = ObservedEntries.from_dense(X)
        if obs.count == 0:
            raise ValueError("X has no observed (finite) entries")
        t, p = _clamp_block(self.block_growth, self.n_oversamples, min(X.shape))
        overrides = {}
        if self.threshold is not None:
            overrides["threshold"] = self.threshold
        if self.step is not None:
            overrides["step"] = self.step
        cfg = SvtConfig.defaults_for(
            obs,
            max_iters=self.max_iter,
            rel_tol=self.rel_tol,
            inner=R3svdConfig(t=t, p=p, q=self.n_power_iter, tau=1.0),
            **overrides,
        )
        result = svt_complete(obs, cfg, seed=_seed_of(self.random_state))
        self.completed_ = result.matrix
        self.rank_ = result.rank
        self.n_iter_ = result.iterations
        self.converged_ = result.converged
        self.residuals_ = result.residuals
        return self

    def transform(self, X):
        check_is_fitted(self, "completed_")
        X = validate_data(self, X, reset=False, ensure_all_finite="allow-nan")
        if X.shape != self.completed_.shape:
            raise ValueError(
                f"completion is transductive: X has shape {X.shape}, "
                f"fitted matrix has shape {self.completed_.shape}"
            )
        out = np.array(X, dtype=np.float64)
        missing = ~np.isfinite(out)
        out[missing] = self.completed_[missing]
        return out
