"""scikit-learn style front ends.

`RobustBlockDesign` searches for a minimax run order; `BlockTreatmentRegressor`
fits treatment means and block effects to observed responses.  Both support
``get_params``/``set_params``/``clone``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .analysis import ExperimentData, efficiency, estimate
from .covariance import CorrelationModel, KKind, NeighbourhoodSpec
from .design import BlockLayout, Design, count_designs
from .loss import LossSpec, LossValue, max_loss
from .optimize import AnnealConfig, anneal, exhaustive_search

__all__ = ["RobustBlockDesign", "BlockTreatmentRegressor", "DEFAULT_EXHAUSTIVE_LIMIT"]

DEFAULT_EXHAUSTIVE_LIMIT = 200_000


class RobustBlockDesign(BaseEstimator):
    """Minimax run order for a complete block experiment.

    Parameters
    ----------
    estimator : {"mglse", "lse"}
    criterion : {"d", "a"}
    k_kind : {"rj0", "identity"}
        Slack direction of the covariance neighbourhood.
    alpha : float
        Neighbourhood size.
    sigma2 : float
        Error variance scaling the baseline correlation.
    method : {"auto", "exhaustive", "anneal"}
        ``"auto"`` enumerates when ``(t!)^(b-1) <= exhaustive_limit``.
    anneal_config : AnnealConfig, optional
    n_jobs : int
        Workers for restarts / enumeration chunks.

    Attributes
    ----------
    design_ : Design
    loss_ : LossValue
    result_ : SearchResult
    """

    def __init__(self, estimator="mglse", criterion="d", k_kind="rj0", alpha=0.25,
                 sigma2=1.0, method="auto", exhaustive_limit=DEFAULT_EXHAUSTIVE_LIMIT,
                 anneal_config=None, n_jobs=1):
        self.estimator = estimator
        self.criterion = criterion
        self.k_kind = k_kind
        self.alpha = alpha
        self.sigma2 = sigma2
        self.method = method
        self.exhaustive_limit = exhaustive_limit
        self.anneal_config = anneal_config
        self.n_jobs = n_jobs

    def _spec(self, correlation) -> NeighbourhoodSpec:
        return NeighbourhoodSpec(correlation, float(self.alpha), KKind(self.k_kind),
                                 float(self.sigma2))

    def fit(self, layout: BlockLayout, correlation: CorrelationModel | list, y=None):
        """Search for the design; `correlation` may be one model or one per block."""
        spec = self._spec(correlation)
        loss = LossSpec(self.estimator, self.criterion)
        method = self.method
        if method == "auto":
            method = "exhaustive" if count_designs(layout) <= self.exhaustive_limit else "anneal"
        if method == "exhaustive":
            result = exhaustive_search(layout, spec, loss, n_jobs=self.n_jobs)
        elif method == "anneal":
            result = anneal(layout, spec, loss, self.anneal_config or AnnealConfig(),
                            n_jobs=self.n_jobs)
        else:
            raise ValueError(f"unknown method {self.method!r}")
        self.layout_ = layout
        self.spec_ = spec
        self.loss_spec_ = loss
        self.result_ = result
        self.design_ = result.best_design
        self.loss_ = result.best_loss
        return self

    def evaluate(self, design: Design) -> LossValue:
        check_is_fitted(self, "design_")
        return max_loss(design, self.spec_, self.loss_spec_)

    def efficiency(self, design: Design) -> float:
        """Efficiency of `design` relative to the fitted robust design."""
        check_is_fitted(self, "design_")
        return efficiency(design, self.design_, self.spec_, self.loss_spec_)


class BlockTreatmentRegressor(RegressorMixin, BaseEstimator):
    """Treatment-means model for complete block data.

    ``X`` has two integer columns, block and treatment (both 1-based), with
    rows ordered block by block and by plot within a block.  That ordering is
    what `r0` refers to when the weighted estimator is used.

    Parameters
    ----------
    estimator : {"lse", "mglse"}
    r0 : array of shape (N, N), optional
        Assumed error covariance; required for ``"mglse"``.
    """

    def __init__(self, estimator="lse", r0=None):
        self.estimator = estimator
        self.r0 = r0

    def _design(self, X) -> Design:
        blocks = X[:, 0]
        b = int(blocks.max())
        if blocks.min() < 1 or np.any(np.diff(blocks) < 0):
            raise ValueError("rows must be grouped by block in increasing order from 1")
        counts = np.bincount(blocks, minlength=b + 1)[1:]
        if np.any(counts != counts[0]):
            raise ValueError("every block needs the same number of plots")
        t = int(counts[0])
        return Design(BlockLayout(t, b), X[:, 1].reshape(b, t).tolist())

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=None, y_numeric=True)
        X = np.asarray(X).astype(int)
        if X.shape[1] != 2:
            raise ValueError(f"X must have 2 columns (block, treatment), got {X.shape[1]}")
        data = ExperimentData(self._design(X), y)
        res = estimate(data, self.estimator, self.r0)
        self.n_treatments_ = data.layout.t
        self.n_blocks_ = data.layout.b
        self.mu_ = res.mu_hat
        self.beta_ = res.beta_hat
        self.block_effects_ = np.append(res.beta_hat, -res.beta_hat.sum())
        self.sigma_ = res.sigma_hat
        self.coef_ = np.concatenate([res.mu_hat, res.beta_hat])
        return self

    def predict(self, X):
        check_is_fitted(self, "mu_")
        X = check_array(X, dtype=None)
        X = np.asarray(X).astype(int)
        blk, trt = X[:, 0] - 1, X[:, 1] - 1
        if blk.min() < 0 or blk.max() >= self.n_blocks_ or trt.min() < 0 \
                or trt.max() >= self.n_treatments_:
            raise ValueError("block or treatment index out of range")
        return self.mu_[trt] + self.block_effects_[blk]
