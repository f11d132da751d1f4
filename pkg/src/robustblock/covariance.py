"""Within-block error correlation models and covariance neighbourhoods.

Correlations are defined over the plot grid of a block, ordered row-major.
For plots at ``(k1, s1)`` and ``(k2, s2)``:

* ``nn``  -- first-order nearest neighbour: ``rho`` at grid distance 1, else 0
* ``ma1`` -- first-order moving average; same support as ``nn``, ``|rho| <= 0.5``
* ``dg``  -- doubly geometric: ``lambda ** (|k1 - k2| + |s1 - s2|)``
* ``de``  -- discrete exponential: ``lambda_row ** |k1 - k2| * lambda_col ** |s1 - s2|``
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .design import BlockLayout
from .numerics import NotPositiveDefinite, cholesky, direct_sum, sym_matrix

__all__ = [
    "Family",
    "KKind",
    "CorrelationModel",
    "NeighbourhoodSpec",
    "correlation_matrix",
    "assemble_r0",
    "worst_case_r",
    "nn_rho_limit",
]


class Family(str, Enum):
    NN = "nn"
    MA1 = "ma1"
    DG = "dg"
    DE = "de"


class KKind(str, Enum):
    """Shape of the neighbourhood slack: the block covariance itself or I_t."""

    RJ0 = "rj0"
    IDENTITY = "identity"


MA1_LIMIT = 0.5


def nn_rho_limit(layout: BlockLayout) -> float:
    """Largest |rho| keeping I + rho * A positive definite on the plot grid.

    The grid adjacency matrix is a Cartesian product of two paths, so its
    spectral radius is ``2 cos(pi/(m+1)) + 2 cos(pi/(n+1))`` (a path of one
    vertex contributes 0).
    """
    def path_radius(k: int) -> float:
        return 2.0 * math.cos(math.pi / (k + 1)) if k > 1 else 0.0

    radius = path_radius(layout.m) + path_radius(layout.n)
    return math.inf if radius == 0 else 1.0 / radius


@dataclass(frozen=True)
class CorrelationModel:
    family: Family
    rho: float = 0.0
    lam: float = 0.0
    lam_col: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.family in (Family.DG, Family.DE):
            for name, val in (("lambda", self.lam), ("lambda_col", self.lam_col)):
                if val is not None and not 0.0 <= val < 1.0:
                    raise ValueError(f"{name} must lie in [0, 1), got {val}")
        if self.family is Family.MA1 and abs(self.rho) > MA1_LIMIT:
            raise ValueError(
                f"MA(1) lag-one correlation must satisfy |rho| <= {MA1_LIMIT}, got {self.rho}"
            )

    @classmethod
    def nn(cls, rho: float) -> "CorrelationModel":
        return cls(Family.NN, rho=rho)

    @classmethod
    def ma1(cls, rho: float) -> "CorrelationModel":
        return cls(Family.MA1, rho=rho)

    @classmethod
    def dg(cls, lam: float) -> "CorrelationModel":
        return cls(Family.DG, lam=lam)

    @classmethod
    def de(cls, lam_row: float, lam_col: float | None = None) -> "CorrelationModel":
        return cls(Family.DE, lam=lam_row, lam_col=lam_row if lam_col is None else lam_col)

    def admissible_range(self, layout: BlockLayout) -> str:
        if self.family is Family.NN:
            return f"|rho| < {nn_rho_limit(layout):.6g}"
        if self.family is Family.MA1:
            return f"|rho| <= {min(MA1_LIMIT, nn_rho_limit(layout)):.6g} (strict at the PD limit)"
        return "0 <= lambda < 1"

    def to_dict(self) -> dict:
        if self.family in (Family.NN, Family.MA1):
            return {"family": self.family.value, "rho": self.rho}
        if self.family is Family.DG:
            return {"family": "dg", "lambda": self.lam}
        return {"family": "de", "lambda_row": self.lam, "lambda_col": self.lam_col}


def correlation_matrix(model: CorrelationModel, layout: BlockLayout) -> np.ndarray:
    """t x t correlation matrix of `model` over the row-major plot grid."""
    t = layout.t
    rows, cols = np.divmod(np.arange(t), layout.n)
    dr = np.abs(rows[:, None] - rows[None, :])
    dc = np.abs(cols[:, None] - cols[None, :])
    fam = model.family
    if fam in (Family.NN, Family.MA1):
        v = np.where(dr + dc == 1, model.rho, 0.0)
        np.fill_diagonal(v, 1.0)
    elif fam is Family.DG:
        v = np.power(model.lam, dr + dc)
    else:
        lam_col = model.lam if model.lam_col is None else model.lam_col
        v = np.power(model.lam, dr) * np.power(lam_col, dc)
    v = sym_matrix(v)
    if fam in (Family.NN, Family.MA1):
        try:
            cholesky(v)
        except NotPositiveDefinite as exc:
            raise NotPositiveDefinite(
                exc.pivot,
                f"{fam.value} correlation rho={model.rho} is not positive definite on a "
                f"{layout.m}x{layout.n} grid; admissible range {model.admissible_range(layout)}",
            ) from None
    return v


@dataclass(frozen=True)
class NeighbourhoodSpec:
    """Covariance neighbourhood around ``R0 = sigma2 * (V_10 (+) ... (+) V_b0)``.

    `base` is either one correlation model shared by all blocks or a sequence
    with one model per block.
    """

    base: CorrelationModel | tuple[CorrelationModel, ...]
    alpha: float = 0.0
    k_kind: KKind = KKind.RJ0
    sigma2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "k_kind", KKind(self.k_kind))
        if not isinstance(self.base, CorrelationModel):
            object.__setattr__(self, "base", tuple(self.base))
        if not self.alpha >= 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be > 0, got {self.sigma2}")

    def with_alpha(self, alpha: float) -> "NeighbourhoodSpec":
        return NeighbourhoodSpec(self.base, alpha, self.k_kind, self.sigma2)

    def models(self, layout: BlockLayout) -> tuple[CorrelationModel, ...]:
        if isinstance(self.base, CorrelationModel):
            return (self.base,) * layout.b
        if len(self.base) != layout.b:
            raise ValueError(
                f"neighbourhood has {len(self.base)} block models but the layout has b={layout.b}"
            )
        return self.base

    def block_covariances(self, layout: BlockLayout) -> list[np.ndarray]:
        """``[R_10, ..., R_b0]`` with ``R_j0 = sigma2 * V_j0``."""
        cache: dict[CorrelationModel, np.ndarray] = {}
        out = []
        for model in self.models(layout):
            if model not in cache:
                cache[model] = self.sigma2 * correlation_matrix(model, layout)
            out.append(cache[model])
        return out

    def slack(self, r_block: np.ndarray) -> np.ndarray:
        """The K matrix paired with one block covariance."""
        if self.k_kind is KKind.RJ0:
            return r_block
        return np.eye(r_block.shape[0])


def assemble_r0(spec: NeighbourhoodSpec, layout: BlockLayout) -> np.ndarray:
    return direct_sum(spec.block_covariances(layout))


def worst_case_r(spec: NeighbourhoodSpec, layout: BlockLayout) -> np.ndarray:
    """``R0 + alpha * (K (+) ... (+) K)``, the top of the neighbourhood."""
    blocks = [r + spec.alpha * spec.slack(r) for r in spec.block_covariances(layout)]
    return direct_sum(blocks)
