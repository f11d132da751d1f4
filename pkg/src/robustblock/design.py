"""Block layouts, run-order designs and the regression model matrices.

A design stores one treatment sequence per block; ``blocks[j][p]`` is the
treatment (1-based) placed in plot ``p`` of block ``j``.  Plots are numbered
row-major over the ``m x n`` grid of a block.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "BlockLayout",
    "Design",
    "ModelMatrices",
    "EnumerationTooLarge",
    "ENUMERATION_CAP",
    "build_model_matrices",
    "block_effect_rows",
    "neighbour_move",
    "apply_swap",
    "enumerate_designs",
    "count_designs",
    "random_design",
    "render_grid",
]

ENUMERATION_CAP = 10**7


class EnumerationTooLarge(ValueError):
    def __init__(self, count: int, cap: int):
        self.count = count
        self.cap = cap
        super().__init__(
            f"complete search needs {count} designs, above the enumeration cap {cap}"
        )


@dataclass(frozen=True)
class BlockLayout:
    """Geometry of a complete block experiment.

    Parameters
    ----------
    t : int
        Number of treatments (= plots per block).
    b : int
        Number of blocks, at least 2.
    m, n : int
        Plot rows and columns within a block; ``m * n == t``.  When omitted,
        runs are taken to be ordered in time (``m = t``, ``n = 1``).
    """

    t: int
    b: int
    m: int | None = None
    n: int | None = None

    def __post_init__(self):
        m, n = self.m, self.n
        if m is None and n is None:
            m, n = self.t, 1
        elif m is None:
            m = self.t // n if n else 0
        elif n is None:
            n = self.t // m if m else 0
        object.__setattr__(self, "m", int(m))
        object.__setattr__(self, "n", int(n))
        if self.t < 1:
            raise ValueError(f"t must be positive, got {self.t}")
        if self.b < 2:
            raise ValueError(f"need at least 2 blocks, got b={self.b}")
        if self.m < 1 or self.n < 1 or self.m * self.n != self.t:
            raise ValueError(
                f"plot grid {self.m}x{self.n} does not hold t={self.t} treatments"
            )

    @property
    def N(self) -> int:
        return self.t * self.b

    def position(self, plot: int) -> tuple[int, int]:
        """Zero-based (row, col) of a zero-based plot index."""
        return divmod(plot, self.n)

    def plot(self, row: int, col: int) -> int:
        return row * self.n + col

    def grid_distance(self, p: int, q: int) -> tuple[int, int]:
        """Row and column separation between plots `p` and `q`."""
        (k1, s1), (k2, s2) = self.position(p), self.position(q)
        return abs(k1 - k2), abs(s1 - s2)

    def adjacent_pairs(self) -> list[tuple[int, int]]:
        """Plot pairs ``p < q`` at grid distance one."""
        out = []
        for p in range(self.t):
            for q in range(p + 1, self.t):
                dr, dc = self.grid_distance(p, q)
                if dr + dc == 1:
                    out.append((p, q))
        return out


@dataclass(frozen=True)
class Design:
    layout: BlockLayout
    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        blocks = tuple(tuple(int(v) for v in blk) for blk in self.blocks)
        object.__setattr__(self, "blocks", blocks)
        lay = self.layout
        if len(blocks) != lay.b:
            raise ValueError(f"expected {lay.b} blocks, got {len(blocks)}")
        full = list(range(1, lay.t + 1))
        for j, blk in enumerate(blocks):
            if sorted(blk) != full:
                raise ValueError(
                    f"block {j + 1} is not a permutation of 1..{lay.t}: {list(blk)}"
                )

    @classmethod
    def identity(cls, layout: BlockLayout) -> "Design":
        seq = tuple(range(1, layout.t + 1))
        return cls(layout, (seq,) * layout.b)

    @classmethod
    def from_rest(cls, layout: BlockLayout, rest: Sequence[Sequence[int]]) -> "Design":
        """Canonical design with block 1 = 1..t followed by `rest`."""
        return cls(layout, (tuple(range(1, layout.t + 1)),) + tuple(map(tuple, rest)))

    @property
    def is_canonical(self) -> bool:
        return self.blocks[0] == tuple(range(1, self.layout.t + 1))

    def canonical(self) -> "Design":
        """Relabel treatments so that block 1 reads 1, 2, ..., t."""
        relabel = {trt: p + 1 for p, trt in enumerate(self.blocks[0])}
        return Design(
            self.layout, tuple(tuple(relabel[v] for v in blk) for blk in self.blocks)
        )

    def relabel(self, mapping: Sequence[int]) -> "Design":
        """Apply treatment relabeling ``r -> mapping[r - 1]`` in every block."""
        return Design(
            self.layout, tuple(tuple(mapping[v - 1] for v in blk) for blk in self.blocks)
        )

    def positions(self) -> np.ndarray:
        """``(b, t)`` array: plot index (0-based) of treatment r+1 in each block."""
        blk = np.asarray(self.blocks, dtype=np.intp) - 1
        pos = np.empty_like(blk)
        rows = np.arange(self.layout.b)[:, None]
        pos[rows, blk] = np.arange(self.layout.t)[None, :]
        return pos

    def to_dict(self) -> dict:
        lay = self.layout
        return {"t": lay.t, "b": lay.b, "m": lay.m, "n": lay.n,
                "blocks": [list(blk) for blk in self.blocks]}

    @classmethod
    def from_dict(cls, data: dict) -> "Design":
        try:
            t = int(data["t"])
            layout = BlockLayout(t, int(data["b"]), int(data.get("m", t)), int(data.get("n", 1)))
            return cls(layout, data["blocks"])
        except KeyError as exc:
            raise ValueError(f"design JSON is missing key {exc}") from None

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "Design":
        return cls.from_dict(json.loads(text))

    def __str__(self) -> str:
        return render_grid(self)


@dataclass(frozen=True)
class ModelMatrices:
    x: np.ndarray
    u: np.ndarray
    z: np.ndarray
    t_selector: np.ndarray


def block_effect_rows(b: int) -> np.ndarray:
    """Row pattern of U_j for each block: ``e_j`` for j < b and all -1 for the last."""
    rows = np.zeros((b, b - 1))
    rows[: b - 1] = np.eye(b - 1)
    rows[b - 1] = -1.0
    return rows


def build_model_matrices(d: Design) -> ModelMatrices:
    lay = d.layout
    t, b = lay.t, lay.b
    x = np.zeros((lay.N, t))
    for j, blk in enumerate(d.blocks):
        x[j * t + np.arange(t), np.asarray(blk) - 1] = 1.0
    u = np.repeat(block_effect_rows(b), t, axis=0)
    z = np.hstack([x, u])
    sel = np.hstack([np.eye(t), np.zeros((t, b - 1))])
    return ModelMatrices(x=x, u=u, z=z, t_selector=sel)


def draw_swap(layout: BlockLayout, rng: np.random.Generator) -> tuple[int, int, int]:
    """Random (block, plot, plot) for a neighbour move; block 0 is never drawn."""
    j = int(rng.integers(1, layout.b))
    p, q = rng.choice(layout.t, size=2, replace=False)
    return j, int(p), int(q)


def apply_swap(d: Design, block: int, p: int, q: int) -> Design:
    """Copy of `d` with plots `p` and `q` of `block` (all zero-based) swapped."""
    blocks = [list(blk) for blk in d.blocks]
    blocks[block][p], blocks[block][q] = blocks[block][q], blocks[block][p]
    return Design(d.layout, tuple(map(tuple, blocks)))


def neighbour_move(d: Design, rng: np.random.Generator) -> Design:
    """Swap two treatments in one randomly chosen block other than the first."""
    if d.layout.t < 2:
        return d
    return apply_swap(d, *draw_swap(d.layout, rng))


def count_designs(layout: BlockLayout) -> int:
    return math.factorial(layout.t) ** (layout.b - 1)


def enumerate_designs(layout: BlockLayout, cap: int = ENUMERATION_CAP) -> Iterator[Design]:
    """Every canonical design once, lexicographic over blocks 2..b."""
    total = count_designs(layout)
    if total > cap:
        raise EnumerationTooLarge(total, cap)
    return _enumerate(layout)


def _enumerate(layout: BlockLayout) -> Iterator[Design]:
    first = tuple(range(1, layout.t + 1))
    perms = list(itertools.permutations(first))
    for rest in itertools.product(perms, repeat=layout.b - 1):
        yield Design(layout, (first,) + rest)


def random_design(layout: BlockLayout, rng: np.random.Generator) -> Design:
    """Uniformly random canonical design."""
    first = tuple(range(1, layout.t + 1))
    rest = tuple(tuple(int(v) + 1 for v in rng.permutation(layout.t))
                 for _ in range(layout.b - 1))
    return Design(layout, (first,) + rest)


def render_grid(d: Design) -> str:
    """Text rendering with one ``m x n`` table per block, blocks side by side."""
    lay = d.layout
    width = len(str(lay.t))
    tables = []
    for blk in d.blocks:
        sep = "+" + "+".join("-" * (width + 2) for _ in range(lay.n)) + "+"
        lines = [sep]
        for k in range(lay.m):
            cells = blk[k * lay.n:(k + 1) * lay.n]
            lines.append("|" + "|".join(f" {c:>{width}} " for c in cells) + "|")
            lines.append(sep)
        tables.append(lines)
    header = []
    for j, lines in enumerate(tables):
        header.append(f"block {j + 1}".ljust(len(lines[0])))
    out = ["   ".join(header).rstrip()]
    for i in range(len(tables[0])):
        out.append("   ".join(tab[i] for tab in tables))
    return "\n".join(out)
