"""Estimator covariances and worst-case (maximum) loss over a neighbourhood.

The worst case over a PSD-ordered neighbourhood is attained at its top,
``R0 + alpha * K0``, because determinant and trace are monotone in the PSD
ordering.  ``LossEvaluator`` evaluates that closed form per design without
forming any N x N matrix: every block-diagonal product collapses to sums of
permuted t x t blocks, and the block-effect part of ``Z' W Z`` does not
depend on the design, so the treatment covariance is the inverse of a
Schur complement.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .covariance import KKind, NeighbourhoodSpec, assemble_r0, worst_case_r
from .design import BlockLayout, Design, ModelMatrices, block_effect_rows, build_model_matrices
from .numerics import log_det, pd_inverse

__all__ = [
    "Estimator",
    "Criterion",
    "LossSpec",
    "LossValue",
    "SingularModel",
    "LossEvaluator",
    "cov_lse_under",
    "cov_mglse_under",
    "max_loss",
    "max_loss_dense",
    "get_evaluator",
]


class Estimator(str, Enum):
    LSE = "lse"
    MGLSE = "mglse"


class Criterion(str, Enum):
    D = "d"
    A = "a"


class SingularModel(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class LossSpec:
    estimator: Estimator = Estimator.MGLSE
    criterion: Criterion = Criterion.D

    def __post_init__(self):
        object.__setattr__(self, "estimator", Estimator(self.estimator))
        object.__setattr__(self, "criterion", Criterion(self.criterion))


@dataclass(frozen=True)
class LossValue:
    """A maximum-loss value.

    `raw` is the determinant or trace itself.  `scaled` is ``raw ** (1/t)``
    for the D criterion and `raw` for A.  `log_raw` keeps full precision
    when the determinant under- or overflows.
    """

    raw: float
    scaled: float
    log_raw: float
    criterion: Criterion

    @classmethod
    def from_log(cls, log_raw: float, t: int, criterion: Criterion) -> "LossValue":
        raw = math.exp(log_raw) if log_raw < 700 else math.inf
        if criterion is Criterion.D:
            return cls(raw, math.exp(log_raw / t), log_raw, criterion)
        return cls(raw, raw, log_raw, criterion)

    @property
    def objective(self) -> float:
        """Quantity minimized by the search routines (log scale for D)."""
        return self.log_raw if self.criterion is Criterion.D else self.raw


def _symmetrize(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


def cov_lse_under(mm: ModelMatrices, r: np.ndarray) -> np.ndarray:
    """Covariance of the least squares treatment means when Cov(eps) = r."""
    x = mm.x
    if r.shape != (x.shape[0], x.shape[0]):
        raise ValueError(f"covariance has shape {r.shape}, expected {(x.shape[0],) * 2}")
    b = x.shape[0] // x.shape[1]
    return _symmetrize(x.T @ r @ x) / b**2


def cov_mglse_under(mm: ModelMatrices, r0: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Sandwich covariance of the R0-weighted estimator when Cov(eps) = r."""
    z = mm.z
    n = z.shape[0]
    if r0.shape != (n, n) or r.shape != (n, n):
        raise ValueError(f"covariances must be {n}x{n}")
    w = pd_inverse(r0)
    g = z.T @ w @ z
    try:
        g_inv = pd_inverse(g)
    except np.linalg.LinAlgError as exc:
        raise SingularModel("Z' R0^-1 Z is singular for this design") from exc
    proj = mm.t_selector @ g_inv @ z.T @ w
    return _symmetrize(proj @ r @ proj.T)


def _measure(cov: np.ndarray, criterion: Criterion) -> float:
    if criterion is Criterion.D:
        return log_det(cov)
    return math.log(float(np.trace(cov)))


def max_loss_dense(d: Design, spec: NeighbourhoodSpec, loss: LossSpec) -> LossValue:
    """Reference evaluation: estimator covariance at the dense worst-case matrix.

    Builds every N x N matrix explicitly.  Slow; meant for checking
    `LossEvaluator` and for small instances.
    """
    mm = build_model_matrices(d)
    r_top = worst_case_r(spec, d.layout)
    if loss.estimator is Estimator.LSE:
        cov = cov_lse_under(mm, r_top)
    else:
        cov = cov_mglse_under(mm, assemble_r0(spec, d.layout), r_top)
    return LossValue.from_log(_measure(cov, loss.criterion), d.layout.t, loss.criterion)


class LossEvaluator:
    """Closed-form maximum loss for one (layout, neighbourhood, loss) triple.

    Per-block factorizations are computed once; calls only index and sum
    t x t blocks, so the object can be shared read-only between searches.
    """

    def __init__(self, layout: BlockLayout, spec: NeighbourhoodSpec, loss: LossSpec):
        self.layout = layout
        self.spec = spec
        self.loss = loss
        b = layout.b
        alpha = spec.alpha
        r_blocks = spec.block_covariances(layout)
        self._rows = np.arange(b)[:, None, None]
        if loss.estimator is Estimator.LSE:
            top = [r + alpha * spec.slack(r) for r in r_blocks]
            self._top = np.stack(top)
            return
        w = [pd_inverse(r) for r in r_blocks]
        self._w = np.stack(w)
        self._w1 = self._w.sum(axis=2)
        urows = block_effect_rows(b)
        self._u = urows
        d_mat = np.einsum("j,ja,jc->ac", self._w1.sum(axis=1), urows, urows)
        self._d_inv = pd_inverse(d_mat)
        self._scale = None
        self._c = None
        if spec.k_kind is KKind.RJ0:
            self._scale = 1.0 + alpha
        else:
            c = np.stack([wj + alpha * (wj @ wj) for wj in w])
            self._c = c
            self._c1 = c.sum(axis=2)
            self._hd = np.einsum("j,ja,jc->ac", self._c1.sum(axis=1), urows, urows)

    def _gather(self, mats: np.ndarray, pos: np.ndarray) -> np.ndarray:
        """``sum_j X_j' M_j X_j``: the block matrices permuted into treatment order."""
        return mats[self._rows, pos[:, :, None], pos[:, None, :]].sum(axis=0)

    def _cross(self, vecs: np.ndarray, pos: np.ndarray) -> np.ndarray:
        """``sum_j U_j' M_j X_j`` from the row sums of each M_j; (b-1) x t."""
        return self._u.T @ np.take_along_axis(vecs, pos, axis=1)

    def covariance(self, d: Design | np.ndarray) -> np.ndarray:
        """Treatment-mean covariance at the worst case of the neighbourhood."""
        pos = d.positions() if isinstance(d, Design) else d
        b = self.layout.b
        if self.loss.estimator is Estimator.LSE:
            return _symmetrize(self._gather(self._top, pos)) / b**2
        s, bt_dinv = self._schur(pos)
        s_inv = pd_inverse(s)
        if self._scale is not None:
            return self._scale * s_inv
        qhq = self._sandwich_middle(pos, bt_dinv)
        return _symmetrize(s_inv @ qhq @ s_inv)

    def _schur(self, pos: np.ndarray):
        a = self._gather(self._w, pos)
        bmat = self._cross(self._w1, pos)
        bt_dinv = bmat.T @ self._d_inv
        s = _symmetrize(a - bt_dinv @ bmat)
        return s, bt_dinv

    def _sandwich_middle(self, pos: np.ndarray, bt_dinv: np.ndarray) -> np.ndarray:
        ha = self._gather(self._c, pos)
        hb = self._cross(self._c1, pos)
        mixed = bt_dinv @ hb
        return _symmetrize(ha - mixed - mixed.T + bt_dinv @ self._hd @ bt_dinv.T)

    def log_loss(self, d: Design | np.ndarray) -> float:
        """Natural log of the maximum loss."""
        pos = d.positions() if isinstance(d, Design) else d
        t = self.layout.t
        if self.loss.criterion is Criterion.A:
            return math.log(float(np.trace(self.covariance(pos))))
        if self.loss.estimator is Estimator.LSE:
            return log_det(self.covariance(pos))
        try:
            s, bt_dinv = self._schur(pos)
            ld_s = log_det(s)
        except np.linalg.LinAlgError as exc:
            raise SingularModel("Z' R0^-1 Z is singular for this design") from exc
        if self._scale is not None:
            return t * math.log(self._scale) - ld_s
        return log_det(self._sandwich_middle(pos, bt_dinv)) - 2.0 * ld_s

    def objective(self, d: Design | np.ndarray) -> float:
        """Search objective: log loss for D, the trace itself for A."""
        ll = self.log_loss(d)
        return ll if self.loss.criterion is Criterion.D else math.exp(ll)

    def __call__(self, d: Design | np.ndarray) -> LossValue:
        return LossValue.from_log(self.log_loss(d), self.layout.t, self.loss.criterion)


@functools.lru_cache(maxsize=64)
def get_evaluator(layout: BlockLayout, spec: NeighbourhoodSpec, loss: LossSpec) -> LossEvaluator:
    return LossEvaluator(layout, spec, loss)


def max_loss(d: Design, spec: NeighbourhoodSpec, loss: LossSpec) -> LossValue:
    """Maximum of the loss over every covariance in the neighbourhood."""
    return get_evaluator(d.layout, spec, loss)(d)
