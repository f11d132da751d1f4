"""Estimation from block experiment data and diagnostics for designs.

Also holds instance checkers for the known structural results: identical
allocations are D-optimal for least squares, and for two blocks under a
geometric correlation the weighted estimator prefers differing allocations.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .covariance import CorrelationModel, KKind, NeighbourhoodSpec, correlation_matrix
from .design import (
    ENUMERATION_CAP,
    BlockLayout,
    Design,
    build_model_matrices,
    count_designs,
    enumerate_designs,
)
from .loss import Criterion, Estimator, LossSpec, SingularModel, get_evaluator, max_loss
from .numerics import log_det, pd_inverse

__all__ = [
    "ExperimentData",
    "EstimateResult",
    "DataFormatError",
    "read_experiment_csv",
    "estimate",
    "efficiency",
    "Theorem2Report",
    "Theorem4Report",
    "check_theorem2",
    "check_theorem4",
    "AdjacencyReport",
    "adjacency_diagnostic",
]


class DataFormatError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class ExperimentData:
    """Responses ordered block by block, plots row-major within each block."""

    design: Design
    responses: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.responses, dtype=float).ravel()
        if y.shape[0] != self.design.layout.N:
            raise ValueError(
                f"expected {self.design.layout.N} responses, got {y.shape[0]}"
            )
        if not np.all(np.isfinite(y)):
            raise ValueError("responses must be finite")
        object.__setattr__(self, "responses", y)

    @property
    def layout(self) -> BlockLayout:
        return self.design.layout


@dataclass(frozen=True)
class EstimateResult:
    mu_hat: np.ndarray
    beta_hat: np.ndarray
    sigma_hat: float
    estimator: Estimator
    df: int

    def to_dict(self) -> dict:
        return {
            "estimator": self.estimator.value,
            "mu_hat": self.mu_hat.tolist(),
            "beta_hat": self.beta_hat.tolist(),
            "sigma_hat": self.sigma_hat,
            "df": self.df,
        }


REQUIRED_COLUMNS = ("block", "row", "col", "treatment", "response")


def read_experiment_csv(path: str | Path, m: int | None = None,
                        n: int | None = None) -> ExperimentData:
    """Read a ``block,row,col,treatment,response`` table (1-based indices).

    Plot grid dimensions default to the largest row and column seen.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip().lower() for h in next(reader)]
        except StopIteration:
            raise DataFormatError("file is empty", 1) from None
        missing = [c for c in REQUIRED_COLUMNS if c not in header]
        if missing:
            raise DataFormatError(f"header lacks column(s) {', '.join(missing)}", 1)
        idx = {c: header.index(c) for c in REQUIRED_COLUMNS}
        records = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"expected {len(header)} fields, found {len(row)}", lineno)
            try:
                rec = tuple(int(row[idx[c]]) for c in REQUIRED_COLUMNS[:4])
                resp = float(row[idx["response"]])
            except ValueError as exc:
                raise DataFormatError(f"cannot parse value ({exc})", lineno) from None
            if min(rec) < 1:
                raise DataFormatError("block, row, col and treatment are 1-based", lineno)
            if not math.isfinite(resp):
                raise DataFormatError("response is not finite", lineno)
            records.append((lineno, *rec, resp))
    if not records:
        raise DataFormatError("no data rows")
    m = m or max(r[2] for r in records)
    n = n or max(r[3] for r in records)
    blocks_seen = sorted({r[1] for r in records})
    b = len(blocks_seen)
    t = m * n
    if blocks_seen != list(range(1, b + 1)):
        raise DataFormatError(f"blocks must be numbered 1..{b}, found {blocks_seen}")
    try:
        layout = BlockLayout(t, b, m, n)
    except ValueError as exc:
        raise DataFormatError(str(exc)) from None
    grid = np.zeros((b, t), dtype=int)
    y = np.full(b * t, np.nan)
    for lineno, blk, row, col, trt, resp in records:
        if row > m or col > n:
            raise DataFormatError(f"plot ({row},{col}) lies outside the {m}x{n} grid", lineno)
        if trt > t:
            raise DataFormatError(f"treatment {trt} exceeds t={t}", lineno)
        p = layout.plot(row - 1, col - 1)
        if grid[blk - 1, p]:
            raise DataFormatError(f"plot ({row},{col}) of block {blk} appears twice", lineno)
        if trt in grid[blk - 1]:
            raise DataFormatError(f"treatment {trt} repeated in block {blk}", lineno)
        grid[blk - 1, p] = trt
        y[(blk - 1) * t + p] = resp
    if np.any(grid == 0):
        j, p = map(int, np.argwhere(grid == 0)[0])
        k, s = layout.position(p)
        raise DataFormatError(f"block {j + 1} has no observation for plot ({k + 1},{s + 1})")
    return ExperimentData(Design(layout, grid.tolist()), y)


def estimate(data: ExperimentData, estimator: Estimator | str = Estimator.LSE,
             r0: np.ndarray | None = None) -> EstimateResult:
    """Least squares or R0-weighted least squares fit of treatment and block effects.

    ``sigma_hat**2`` is the (weighted) residual sum of squares over
    ``N - t - b + 1`` degrees of freedom.  For the weighted fit the weight is
    ``R0^-1`` rescaled so that R0 has unit mean diagonal, which keeps
    ``sigma_hat`` on the response scale.
    """
    estimator = Estimator(estimator)
    lay = data.layout
    mm = build_model_matrices(data.design)
    z, y = mm.z, data.responses
    if estimator is Estimator.LSE:
        w = np.eye(lay.N)
    else:
        if r0 is None:
            raise ValueError("the weighted estimator needs r0")
        r0 = np.asarray(r0, dtype=float)
        if r0.shape != (lay.N, lay.N):
            raise ValueError(f"r0 must be {lay.N}x{lay.N}, got {r0.shape}")
        w = pd_inverse(r0 / np.mean(np.diag(r0)))
    g = z.T @ w @ z
    try:
        theta = np.linalg.solve(g, z.T @ w @ y)
        log_det(g)
    except np.linalg.LinAlgError as exc:
        raise SingularModel("model matrix is rank deficient") from exc
    resid = y - z @ theta
    df = lay.N - lay.t - lay.b + 1
    rss = float(resid @ w @ resid)
    sigma = math.sqrt(max(rss, 0.0) / df) if df > 0 else float("nan")
    return EstimateResult(theta[: lay.t], theta[lay.t:], sigma, estimator, df)


def efficiency(candidate: Design, robust: Design, spec: NeighbourhoodSpec,
               loss: LossSpec = LossSpec(Estimator.MGLSE, Criterion.D)) -> float:
    """``phi(robust) / phi(candidate)`` on raw loss values."""
    if candidate.layout != robust.layout:
        raise ValueError("designs have different layouts")
    return math.exp(max_loss(robust, spec, loss).log_raw - max_loss(candidate, spec, loss).log_raw)


def _same_allocation(d: Design) -> bool:
    return all(blk == d.blocks[0] for blk in d.blocks)


@dataclass
class Theorem2Report:
    layout: BlockLayout
    model: CorrelationModel
    alpha: float
    min_loss: float
    same_allocation_loss: float
    minimizers: list[Design] = field(default_factory=list)

    @property
    def holds(self) -> bool:
        return math.isclose(self.same_allocation_loss, self.min_loss,
                            rel_tol=1e-10, abs_tol=0.0)

    def summary(self) -> str:
        return (f"{self.model.family.value} t={self.layout.t} b={self.layout.b}: "
                f"min={self.min_loss:.12g} same-allocation={self.same_allocation_loss:.12g} "
                f"minimizers={len(self.minimizers)} holds={self.holds}")


def check_theorem2(layout: BlockLayout, base: CorrelationModel, alpha: float = 0.0,
                   sigma2: float = 1.0, cap: int = ENUMERATION_CAP,
                   rtol: float = 1e-10) -> Theorem2Report:
    """Exhaustively confirm that an identical allocation minimizes the LSE D-loss."""
    spec = NeighbourhoodSpec(base, alpha, KKind.RJ0, sigma2)
    loss = LossSpec(Estimator.LSE, Criterion.D)
    ev = get_evaluator(layout, spec, loss)
    values = []
    designs = []
    for d in enumerate_designs(layout, cap):
        designs.append(d)
        values.append(math.exp(ev.log_loss(d)))
    best = min(values)
    minimizers = [d for d, v in zip(designs, values) if math.isclose(v, best, rel_tol=rtol)]
    same = math.exp(ev.log_loss(Design.identity(layout)))
    return Theorem2Report(layout, base, alpha, best, same, minimizers)


@dataclass
class Theorem4Report:
    t: int
    lam: float
    alpha: float
    same_allocation_loss: float
    closed_form: float
    best_loss: float
    best_design: Design
    min_lse_loss: float
    searched: str

    @property
    def closed_form_error(self) -> float:
        return abs(self.same_allocation_loss - self.closed_form) / self.closed_form

    @property
    def gap(self) -> float:
        """How far the best permutation undercuts the identical allocation."""
        return self.same_allocation_loss - self.best_loss

    @property
    def holds(self) -> bool:
        return (self.closed_form_error < 1e-10 and self.gap > 0
                and self.best_loss < self.min_lse_loss)

    def summary(self) -> str:
        return (f"t={self.t} lambda={self.lam} alpha={self.alpha}: identical={self.same_allocation_loss:.10g} "
                f"closed-form={self.closed_form:.10g} best={self.best_loss:.10g} ({self.searched}) "
                f"gap={self.gap:.3g} min LSE={self.min_lse_loss:.10g} holds={self.holds}")


def witness_permutation(t: int) -> tuple[int, ...]:
    """Second-block order fixing both end plots and reversing the interior."""
    return (1,) + tuple(range(t - 1, 1, -1)) + (t,)


def check_theorem4(t: int, lam: float, alpha: float = 0.0, sigma2: float = 1.0,
                   cap: int = ENUMERATION_CAP) -> Theorem4Report:
    """Two blocks of ``t > 3`` time-ordered runs under a geometric correlation.

    Checks the closed form of the identical-allocation loss, then searches
    (exhaustively when ``t!`` fits under `cap`, otherwise over the interior
    permutations that fix both end plots) for a strictly better design, and
    compares against the least squares minimum.
    """
    if t <= 3:
        raise ValueError("needs t > 3")
    if not 0 < lam < 1:
        raise ValueError("lambda must lie in (0, 1)")
    layout = BlockLayout(t, 2)
    model = CorrelationModel.dg(lam)
    spec = NeighbourhoodSpec(model, alpha, KKind.RJ0, sigma2)
    mg = get_evaluator(layout, spec, LossSpec(Estimator.MGLSE, Criterion.D))
    ls = get_evaluator(layout, spec, LossSpec(Estimator.LSE, Criterion.D))
    same = math.exp(mg.log_loss(Design.identity(layout)))
    v = correlation_matrix(model, layout)
    closed = (1 + alpha) ** t * sigma2 ** t * math.exp(log_det(v)) / 2 ** t
    if count_designs(layout) <= cap:
        designs = enumerate_designs(layout, cap)
        searched = "exhaustive"
    else:
        designs = (Design.from_rest(layout, [(1,) + tuple(p + 2 for p in perm) + (t,)])
                   for perm in itertools.permutations(range(t - 2)))
        searched = "end-fixed interior permutations"
        if math.factorial(t - 2) > cap:
            designs = iter([Design.from_rest(layout, [witness_permutation(t)])])
            searched = "witness"
    best_val, best_d = math.inf, None
    min_lse = math.inf
    for d in designs:
        val = mg.log_loss(d)
        if val < best_val:
            best_val, best_d = val, d
        if searched == "exhaustive":
            min_lse = min(min_lse, ls.log_loss(d))
    if searched != "exhaustive":
        # identical allocation is the least squares optimum
        min_lse = ls.log_loss(Design.identity(layout))
    return Theorem4Report(t, lam, alpha, same, closed, math.exp(best_val), best_d,
                          math.exp(min_lse), searched)


@dataclass
class AdjacencyReport:
    pairs: dict[tuple[int, int], list[int]]
    repeated: int

    def summary(self) -> str:
        lines = [f"pairs adjacent in more than one block: {self.repeated}"]
        for pair, blocks in sorted(self.pairs.items()):
            if len(blocks) > 1:
                lines.append(f"  {pair[0]}-{pair[1]}: blocks {', '.join(map(str, blocks))}")
        return "\n".join(lines)


def adjacency_diagnostic(d: Design) -> AdjacencyReport:
    """For each treatment pair, the (1-based) blocks in which they share a plot edge."""
    pairs: dict[tuple[int, int], list[int]] = {}
    adj = d.layout.adjacent_pairs()
    for j, blk in enumerate(d.blocks):
        for p, q in adj:
            key = tuple(sorted((blk[p], blk[q])))
            pairs.setdefault(key, []).append(j + 1)
    repeated = sum(1 for blocks in pairs.values() if len(blocks) > 1)
    return AdjacencyReport(pairs, repeated)
