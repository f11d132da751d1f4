"""Search for minimax designs: complete enumeration and simulated annealing.

Both searches work on canonical designs (block 1 fixed to 1..t).  The
annealer follows the usual recipe: random two-treatment swaps in blocks
2..b, Metropolis acceptance, geometric cooling, the best design ever seen
is kept, and a final descent polish leaves a design that no single swap
improves.
"""

from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from joblib import Parallel, delayed

from .covariance import NeighbourhoodSpec
from .design import (
    ENUMERATION_CAP,
    BlockLayout,
    Design,
    EnumerationTooLarge,
    count_designs,
    draw_swap,
    random_design,
)
from .loss import Criterion, LossEvaluator, LossSpec, LossValue, get_evaluator

__all__ = [
    "AnnealConfig",
    "SearchResult",
    "exhaustive_search",
    "anneal",
    "descent_polish",
    "is_locally_optimal",
]

log = logging.getLogger(__name__)

# relative margin below which two objective values count as a tie
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class AnnealConfig:
    """Annealing schedule.

    ``initial_temperature="auto"`` samples 100 random moves from the starting
    design and picks the temperature at which the median uphill step is
    accepted with probability 0.8.  ``iterations_per_temperature=None``
    means ``50 * t``.
    """

    initial_temperature: float | str = "auto"
    cooling_factor: float = 0.95
    iterations_per_temperature: int | None = None
    max_temperature_stages: int = 200
    stall_stages_to_stop: int = 20
    restarts: int = 8
    seed: int = 0

    def __post_init__(self):
        t0 = self.initial_temperature
        if isinstance(t0, str):
            if t0 != "auto":
                raise ValueError(f"initial_temperature must be > 0 or 'auto', got {t0!r}")
        elif not t0 > 0:
            raise ValueError(f"initial_temperature must be > 0, got {t0}")
        if not 0 < self.cooling_factor < 1:
            raise ValueError(f"cooling_factor must lie in (0, 1), got {self.cooling_factor}")
        for name in ("max_temperature_stages", "stall_stages_to_stop", "restarts"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if self.iterations_per_temperature is not None and self.iterations_per_temperature < 1:
            raise ValueError("iterations_per_temperature must be a positive integer")

    def iterations(self, t: int) -> int:
        return self.iterations_per_temperature or 50 * t


@dataclass
class SearchResult:
    best_design: Design
    best_loss: LossValue
    evaluations: int
    method: str
    trace: list[tuple] = field(default_factory=list)
    all_objectives: np.ndarray | None = None

    def trace_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["restart", "stage", "temperature", "current_loss", "best_loss"])
        for row in self.trace:
            writer.writerow([row[0], row[1], repr(row[2]), repr(row[3]), repr(row[4])])
        return buf.getvalue()


def _audit(design: Design, objective: float, evaluator: LossEvaluator) -> LossValue:
    fresh = LossEvaluator(evaluator.layout, evaluator.spec, evaluator.loss)(design)
    if not math.isclose(fresh.objective, objective, rel_tol=1e-9, abs_tol=1e-12):
        raise RuntimeError(
            f"search bookkeeping drifted: tracked {objective!r}, re-evaluated {fresh.objective!r}"
        )
    return fresh


def _improves(new: float, best: float) -> bool:
    return new < best - TIE_RTOL * max(1.0, abs(best))


def _scan(evaluator: LossEvaluator, perm_pos: np.ndarray, first: int, stop: int,
          keep_all: bool):
    """Evaluate canonical designs with flat indices in ``[first, stop)``."""
    layout = evaluator.layout
    t, b = layout.t, layout.b
    nperm = perm_pos.shape[0]
    pos = np.empty((b, t), dtype=np.intp)
    pos[0] = np.arange(t)
    best_idx, best_val = -1, math.inf
    values = np.empty(stop - first) if keep_all else None
    for flat in range(first, stop):
        rem = flat
        for j in range(b - 1, 0, -1):
            rem, k = divmod(rem, nperm)
            pos[j] = perm_pos[k]
        val = evaluator.objective(pos)
        if keep_all:
            values[flat - first] = val
        if best_idx < 0 or _improves(val, best_val):
            best_idx, best_val = flat, val
    return best_idx, best_val, values


def _design_from_flat(layout: BlockLayout, perms: Sequence[tuple], flat: int) -> Design:
    rest = []
    for _ in range(layout.b - 1):
        flat, k = divmod(flat, len(perms))
        rest.append(perms[k])
    return Design.from_rest(layout, [tuple(v + 1 for v in p) for p in reversed(rest)])


def exhaustive_search(layout: BlockLayout, spec: NeighbourhoodSpec, loss: LossSpec, *,
                      cap: int = ENUMERATION_CAP, keep_all: bool = False,
                      n_jobs: int = 1) -> SearchResult:
    """Global minimizer over all ``(t!)^(b-1)`` canonical designs.

    Designs are visited lexicographically over blocks 2..b and the first
    minimum found is kept.  With ``keep_all=True`` the objective of every
    design, in that order, is returned in ``all_objectives``.
    """
    total = count_designs(layout)
    if total > cap:
        raise EnumerationTooLarge(total, cap)
    evaluator = get_evaluator(layout, spec, loss)
    perms = list(itertools.permutations(range(layout.t)))
    perm_pos = np.argsort(np.asarray(perms, dtype=np.intp), axis=1)
    if n_jobs == 1:
        chunks = [_scan(evaluator, perm_pos, 0, total, keep_all)]
    else:
        edges = np.linspace(0, total, 4 * max(1, abs(n_jobs)) + 1).astype(int)
        chunks = Parallel(n_jobs=n_jobs)(
            delayed(_scan)(evaluator, perm_pos, int(lo), int(hi), keep_all)
            for lo, hi in zip(edges[:-1], edges[1:]) if hi > lo
        )
    best_idx, best_val = -1, math.inf
    for idx, val, _ in chunks:
        if best_idx < 0 or _improves(val, best_val):
            best_idx, best_val = idx, val
    design = _design_from_flat(layout, perms, best_idx)
    values = np.concatenate([c[2] for c in chunks]) if keep_all else None
    return SearchResult(design, _audit(design, best_val, evaluator), total,
                        "exhaustive", all_objectives=values)


class _State:
    """Mutable design state: treatments per plot and plots per treatment."""

    def __init__(self, design: Design):
        self.blocks = np.asarray(design.blocks, dtype=np.intp) - 1
        self.pos = np.asarray(design.positions(), dtype=np.intp)

    def swap(self, j: int, p: int, q: int):
        blk = self.blocks[j]
        a, c = blk[p], blk[q]
        blk[p], blk[q] = c, a
        self.pos[j, a], self.pos[j, c] = q, p

    def design(self, layout: BlockLayout) -> Design:
        return Design(layout, tuple(tuple(int(v) + 1 for v in row) for row in self.blocks))


def _auto_temperature(evaluator, state: _State, current: float, rng) -> float:
    layout = evaluator.layout
    deltas = []
    for _ in range(100):
        j, p, q = draw_swap(layout, rng)
        state.swap(j, p, q)
        deltas.append(evaluator.objective(state.pos) - current)
        state.swap(j, p, q)
    uphill = [d for d in deltas if d > 0]
    if not uphill:
        spread = max((abs(d) for d in deltas), default=0.0)
        return spread if spread > 0 else 1.0
    return -float(np.median(uphill)) / math.log(0.8)


def _steepest_descent(evaluator, state: _State, current: float) -> tuple[float, int]:
    layout = evaluator.layout
    evals = 0
    pairs = list(itertools.combinations(range(layout.t), 2))
    while True:
        best_move, best_val = None, current
        for j in range(1, layout.b):
            for p, q in pairs:
                state.swap(j, p, q)
                val = evaluator.objective(state.pos)
                state.swap(j, p, q)
                evals += 1
                if _improves(val, best_val):
                    best_move, best_val = (j, p, q), val
        if best_move is None:
            return current, evals
        state.swap(*best_move)
        current = best_val


def descent_polish(evaluator: LossEvaluator, design: Design, rng: np.random.Generator,
                   budget: int) -> tuple[Design, float, int]:
    """Random moves accepted only when not worse, then steepest descent to a 2-swap local optimum."""
    state = _State(design)
    current = evaluator.objective(state.pos)
    evals = 1
    for _ in range(budget):
        j, p, q = draw_swap(evaluator.layout, rng)
        state.swap(j, p, q)
        val = evaluator.objective(state.pos)
        evals += 1
        if val <= current:
            current = val
        else:
            state.swap(j, p, q)
    current, extra = _steepest_descent(evaluator, state, current)
    return state.design(evaluator.layout), current, evals + extra


def is_locally_optimal(evaluator: LossEvaluator, design: Design) -> bool:
    """True when no single swap within blocks 2..b lowers the loss."""
    state = _State(design)
    current = evaluator.objective(state.pos)
    for j in range(1, evaluator.layout.b):
        for p, q in itertools.combinations(range(evaluator.layout.t), 2):
            state.swap(j, p, q)
            val = evaluator.objective(state.pos)
            state.swap(j, p, q)
            if _improves(val, current):
                return False
    return True


def _display(evaluator: LossEvaluator, objective: float) -> float:
    """Objective converted to the reported (scaled) loss."""
    if evaluator.loss.criterion is Criterion.D:
        return math.exp(objective / evaluator.layout.t)
    return objective


def _chain(evaluator: LossEvaluator, cfg: AnnealConfig, seed_seq, restart: int,
           initial: Design | None = None):
    layout = evaluator.layout
    rng = np.random.default_rng(seed_seq)
    design0 = initial if initial is not None else random_design(layout, rng)
    state = _State(design0)
    current = evaluator.objective(state.pos)
    evals = 1
    initial_obj = current
    best, best_blocks = current, state.blocks.copy()
    if cfg.initial_temperature == "auto":
        temp = _auto_temperature(evaluator, state, current, rng)
        evals += 100
    else:
        temp = float(cfg.initial_temperature)
    iters = cfg.iterations(layout.t)
    trace = []
    stall = 0
    if layout.t >= 2:
        for stage in range(cfg.max_temperature_stages):
            improved = False
            for _ in range(iters):
                j, p, q = draw_swap(layout, rng)
                state.swap(j, p, q)
                val = evaluator.objective(state.pos)
                evals += 1
                delta = val - current
                if delta <= 0 or rng.random() < math.exp(-delta / temp):
                    current = val
                    if _improves(val, best):
                        best, best_blocks = val, state.blocks.copy()
                        improved = True
                else:
                    state.swap(j, p, q)
            trace.append((restart, stage, temp, _display(evaluator, current),
                          _display(evaluator, best)))
            stall = 0 if improved else stall + 1
            if stall >= cfg.stall_stages_to_stop:
                break
            temp *= cfg.cooling_factor
    best_design = Design(layout, tuple(tuple(int(v) + 1 for v in row) for row in best_blocks))
    # polish starts at the best design and never accepts an uphill move
    best_design, best, extra = descent_polish(evaluator, best_design, rng, iters)
    evals += extra
    return best_design, best, evals, trace, initial_obj


def anneal(layout: BlockLayout, spec: NeighbourhoodSpec, loss: LossSpec,
           cfg: AnnealConfig | None = None, *, n_jobs: int = 1,
           initial: Design | None = None) -> SearchResult:
    """Simulated annealing with restarts; returns the best design over all chains.

    Each restart owns a random stream derived from ``(cfg.seed, restart)``,
    so results do not depend on `n_jobs`.
    """
    cfg = cfg or AnnealConfig()
    evaluator = get_evaluator(layout, spec, loss)
    if initial is not None and not initial.is_canonical:
        initial = initial.canonical()
    streams = np.random.SeedSequence(cfg.seed).spawn(cfg.restarts)
    jobs = [delayed(_chain)(evaluator, cfg, s, i, initial) for i, s in enumerate(streams)]
    if n_jobs == 1:
        chains = [job[0](*job[1], **job[2]) for job in jobs]
    else:
        chains = Parallel(n_jobs=n_jobs)(jobs)
    best_design, best, evals, trace = None, math.inf, 0, []
    for design, obj, n_eval, chain_trace, _ in chains:
        evals += n_eval
        trace.extend(chain_trace)
        if best_design is None or _improves(obj, best):
            best_design, best = design, obj
        log.debug("restart finished at %.10g", _display(evaluator, obj))
    return SearchResult(best_design, _audit(best_design, best, evaluator), evals,
                        "anneal", trace=trace)
