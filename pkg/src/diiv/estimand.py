"""Reduced forms, first stages and the DIIV ratio.

Everything here works on cell means.  The regression representations live in
:mod:`diiv.twostage`.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Literal, Mapping, Sequence

import numpy as np

from .errors import MissingCell, OrderingViolation, SchemaError, ZeroDenominator
from .table import Mode, ObservationTable, as_binary

# denominators in data-driven ratios are compared against this, relative to the
# first-stage scale; exact algebraic paths use EXACT_TOL
DATA_TOL = 1e-8
EXACT_TOL = 1e-12

Cell = tuple[int, int]
CELLS: tuple[Cell, ...] = ((0, 0), (1, 0), (0, 1), (1, 1))


@dataclass(frozen=True)
class DirectedDesign:
    """Directive orientation (+1 encourage, -1 discourage) and attribute label per instrument."""

    s1: int = 1
    s2: int = 1
    m1: str = ""
    m2: str = ""

    def __post_init__(self) -> None:
        for name in ("s1", "s2"):
            s = getattr(self, name)
            if s not in (1, -1) or isinstance(s, bool):
                raise ValueError(f"{name} must be +1 or -1, got {s!r}")
            object.__setattr__(self, name, int(s))

    @property
    def signs(self) -> tuple[int, int]:
        return self.s1, self.s2


@dataclass(frozen=True)
class EdgeContrast:
    rf: float
    fs: float
    # counts keyed (z_j, z_-j) in joint mode, (z, h) in parallel mode
    cell_counts: Mapping[Cell, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (math.isfinite(self.rf) and math.isfinite(self.fs)):
            raise ValueError("contrasts must be finite")
        if abs(self.fs) > 1.0 + 1e-12:
            raise ValueError(f"first stage {self.fs} outside [-1, 1]")

    def flipped(self) -> "EdgeContrast":
        return EdgeContrast(-self.rf, -self.fs, dict(self.cell_counts))

    @property
    def wald(self) -> float:
        """Single-instrument IV ratio rf/fs."""
        if self.fs == 0.0:
            raise ZeroDenominator("first stage is zero")
        return self.rf / self.fs


@dataclass(frozen=True)
class DiivResult:
    tau: float
    numerator: float
    denominator: float
    method: Literal["ratio", "two-stage-parallel", "two-stage-joint"] = "ratio"


def _mean(values: np.ndarray, mask: np.ndarray) -> float:
    # boolean indexing yields a contiguous copy in row order, so numpy's
    # pairwise summation runs in a fixed order
    return float(np.mean(values[mask]))


def _counts(a: np.ndarray, b: np.ndarray) -> dict[Cell, int]:
    return {(i, k): int(np.count_nonzero((a == i) & (b == k))) for i, k in CELLS}


def edge_contrasts(
    table: ObservationTable, j: int, mode: Mode | None = None, baseline: int = 0
) -> EdgeContrast:
    """Reduced form and first stage for instrument ``j`` (1 or 2).

    In parallel mode the contrast is taken inside frame ``j``.  In joint mode
    the other instrument is held at ``baseline`` (0 unless asked otherwise).
    """
    if j not in (1, 2):
        raise ValueError(f"instrument index must be 1 or 2, got {j!r}")
    mode = table.resolve_mode(mode)
    if mode == "parallel":
        z = table.assignment()
        h = table.h
        counts = _counts(z, h)
        frame = 1 if j == 1 else 0
        base = h == frame
        used = [(1, frame), (0, frame)]
    else:
        zj, zo = (table.z1, table.z2) if j == 1 else (table.z2, table.z1)
        z = zj
        counts = _counts(zj, zo)
        base = zo == baseline
        used = [(1, baseline), (0, baseline)]
    for cell in used:
        if counts[cell] == 0:
            raise MissingCell(f"instrument {j}: cell {cell} is empty")
    on, off = base & (z == 1), base & (z == 0)
    rf = _mean(table.y, on) - _mean(table.y, off)
    fs = _mean(table.d, on) - _mean(table.d, off)
    return EdgeContrast(rf, fs, counts)


def diiv_ratio(
    c1: EdgeContrast,
    c2: EdgeContrast,
    design: DirectedDesign | None = None,
    tol: float = DATA_TOL,
) -> DiivResult:
    """Oriented ratio (s1*rf1 - s2*rf2) / (s1*fs1 - s2*fs2)."""
    s1, s2 = (design or DirectedDesign()).signs
    num = s1 * c1.rf - s2 * c2.rf
    den = s1 * c1.fs - s2 * c2.fs
    scale = max(abs(c1.fs), abs(c2.fs))
    if den == 0.0 or abs(den) <= tol * scale:
        raise ZeroDenominator(
            f"differenced first stage {den:.3g} is degenerate; opposing-shift relevance fails"
        )
    return DiivResult(num / den, num, den, "ratio")


def diiv_estimate(
    table: ObservationTable,
    design: DirectedDesign | None = None,
    mode: Mode | None = None,
) -> DiivResult:
    """Sample-mean DIIV on a table, edges taken against the raw (0, 0) baseline."""
    c1 = edge_contrasts(table, 1, mode)
    c2 = edge_contrasts(table, 2, mode)
    return diiv_ratio(c1, c2, design)


def pooled_iv(table: ObservationTable) -> float:
    """Standard IV on the pooled instrument: (RF1 + RF2) / (FS1 + FS2)."""
    c1 = edge_contrasts(table, 1, "parallel")
    c2 = edge_contrasts(table, 2, "parallel")
    den = c1.fs + c2.fs
    if den == 0.0 or abs(den) <= DATA_TOL * max(abs(c1.fs), abs(c2.fs)):
        raise ZeroDenominator("pooled first stage is zero")
    return (c1.rf + c2.rf) / den


def flip_instrument(z) -> np.ndarray:
    return (1 - as_binary(z, "instrument")).astype(np.int8)


def align_instrument(z, s: int) -> np.ndarray:
    """Recode so the directive reads as an encouragement: (1 - s)/2 + s*z."""
    if s not in (1, -1):
        raise ValueError(f"sign must be +1 or -1, got {s!r}")
    z = as_binary(z, "instrument")
    return ((1 - s) // 2 + s * z).astype(np.int8)


def pool_and_flip(table: ObservationTable) -> float:
    """Pooled IV after toggling the frame-2 assignment."""
    if table.h is None:
        raise SchemaError("parallel design requires column h")
    z = table.assignment()
    flipped = np.where(table.h == 0, flip_instrument(z), z)
    return pooled_iv(table.replace(z1=flipped, z2=None))


def aligned_cell_means(table: ObservationTable, design: DirectedDesign | None = None):
    """Mean y, mean d and row count per aligned cell (a, b).

    Empty cells get NaN means; the two edge cells (1,0) and (0,1) must be populated.
    """
    design = design or DirectedDesign()
    table.resolve_mode("joint")
    a1 = align_instrument(table.z1, design.s1)
    a2 = align_instrument(table.z2, design.s2)
    y_cells, d_cells, counts = {}, {}, {}
    for a, b in CELLS:
        mask = (a1 == a) & (a2 == b)
        counts[(a, b)] = int(np.count_nonzero(mask))
        y_cells[(a, b)] = _mean(table.y, mask) if counts[(a, b)] else math.nan
        d_cells[(a, b)] = _mean(table.d, mask) if counts[(a, b)] else math.nan
    for cell in ((1, 0), (0, 1)):
        if counts[cell] == 0:
            raise MissingCell(f"aligned cell {cell} is empty")
    return y_cells, d_cells, counts


def _cell(values, cell: Cell) -> float:
    if isinstance(values, Mapping):
        return float(values[cell])
    return float(values[CELLS.index(cell)])


def diiv_from_cells(
    y_cells: Mapping[Cell, float] | Sequence[float],
    d_cells: Mapping[Cell, float] | Sequence[float],
    tol: float = EXACT_TOL,
) -> DiivResult:
    """DIIV from aligned-cell means.

    Cells are given as a mapping keyed ``(a, b)`` or as a sequence ordered
    ``(00, 10, 01, 11)``.  The baseline cancels, so only the (1,0) and (0,1)
    entries are read.
    """
    num = _cell(y_cells, (1, 0)) - _cell(y_cells, (0, 1))
    den = _cell(d_cells, (1, 0)) - _cell(d_cells, (0, 1))
    if not abs(den) > tol:
        raise ZeroDenominator(f"d10 - d01 = {den:.3g} is degenerate")
    return DiivResult(num / den, num, den, "ratio")


def lambda_weight(pC1: float, pC2: float, pF1: float, pF2: float, tol: float = EXACT_TOL) -> float:
    """Weight on the complier effect in the DIIV convex combination.

    Warns with :class:`OrderingViolation` when the opposing-shift orderings
    ``pC1 >= pC2`` and ``pF1 <= pF2`` fail; the value is then not confined to [0, 1].
    """
    dc = pC1 - pC2
    den = dc - (pF1 - pF2)
    if not den > tol:
        raise ZeroDenominator(f"differential shift {den:.3g} is not positive")
    if pC1 < pC2 or pF1 > pF2:
        warnings.warn(
            f"opposing-shift ordering fails (pC1={pC1}, pC2={pC2}, pF1={pF1}, pF2={pF2})",
            OrderingViolation,
            stacklevel=2,
        )
    return dc / den
