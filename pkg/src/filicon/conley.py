"""Maximal invariant sets, isolation verdicts and omega-limits on a cell map.

The invariant part of ``N`` is the largest subset in which every cell has
both a successor and a predecessor.  Because each exact full orbit in
``|N|`` produces a bi-infinite cell itinerary in the outer approximation,
that subset covers every cell meeting the exact invariant set.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .multiflow import CellSet, CombinatorialMultiflow, Grid, image

__all__ = [
    "ISOLATING",
    "INCONCLUSIVE",
    "IsolationReport",
    "invariant_part",
    "prune_once",
    "boundary_cells",
    "cell_distance",
    "check_isolation",
    "omega_limit",
    "cell_hull",
    "write_report",
    "write_cellset",
]

ISOLATING = "Isolating"
INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class IsolationReport:
    verdict: str
    invariant: CellSet
    boundary: CellSet
    neighborhood: CellSet
    min_boundary_distance: float  # inf when the invariant part is empty
    grid_counts: tuple[int, ...]
    h_tau: float
    lam: float
    M: float
    rounds: int

    @property
    def isolating(self) -> bool:
        return self.verdict == ISOLATING


def prune_once(mf: CombinatorialMultiflow, S: np.ndarray) -> np.ndarray:
    """Drop cells of ``S`` lacking a successor or a predecessor in ``S``."""
    return S & mf.preimage_step(S) & mf.step(S)


def invariant_part(mf: CombinatorialMultiflow, N: CellSet, max_rounds: int | None = None) -> CellSet:
    """Greatest subset of ``N`` closed under having successors and predecessors.

    With ``max_rounds`` the pruning stops early; the result then still
    contains every cell on an itinerary of length ``max_rounds`` in each
    time direction.
    """
    S = N.mask.copy()
    rounds = 0
    while max_rounds is None or rounds < max_rounds:
        nxt = prune_once(mf, S)
        rounds += 1
        if np.array_equal(nxt, S):
            break
        S = nxt
    return CellSet(S)


def _rounds_to_fixpoint(mf: CombinatorialMultiflow, N: CellSet):
    S = N.mask.copy()
    rounds = 0
    while True:
        nxt = prune_once(mf, S)
        rounds += 1
        if np.array_equal(nxt, S):
            return CellSet(S), rounds
        S = nxt


def boundary_cells(grid: Grid, N: CellSet) -> CellSet:
    """Cells of ``N`` touching a cell outside ``N`` or the window boundary."""
    outside = ~N.mask
    touching = grid.neighbors(outside)
    return CellSet(N.mask & (touching | grid.window_boundary()))


def cell_distance(grid: Grid, A: CellSet, B: CellSet, chunk: int = 4096) -> float:
    """Smallest sup-norm gap between the closed cells of ``A`` and of ``B``."""
    if not A or not B:
        return float("inf")
    ma = grid.multi_index(A.indices())
    mb = grid.multi_index(B.indices())
    best = np.inf
    for s in range(0, len(ma), chunk):
        diff = np.abs(ma[s : s + chunk, None, :] - mb[None, :, :])
        gap = np.max(np.maximum(diff - 1, 0) * grid.widths, axis=2)
        best = min(best, float(gap.min()))
    return best


def check_isolation(mf: CombinatorialMultiflow, N: CellSet) -> IsolationReport:
    """Isolating iff the invariant part of ``N`` avoids the boundary cells of ``N``."""
    if N.size != mf.grid.n_cells:
        raise ValueError("cell set does not match the grid")
    inv, rounds = _rounds_to_fixpoint(mf, N)
    bd = boundary_cells(mf.grid, N)
    verdict = ISOLATING if not (inv & bd) else INCONCLUSIVE
    return IsolationReport(
        verdict=verdict,
        invariant=inv,
        boundary=bd,
        neighborhood=N,
        min_boundary_distance=cell_distance(mf.grid, inv, bd),
        grid_counts=mf.grid.counts,
        h_tau=mf.h_tau,
        lam=mf.lam,
        M=mf.M,
        rounds=rounds,
    )


def omega_limit(
    mf: CombinatorialMultiflow,
    A: CellSet,
    invariant_only: bool = True,
    max_steps: int = 100000,
) -> CellSet:
    """Union of the eventual cycle of ``S_{k+1} = image(S_k)`` from ``S_0 = A``.

    The cell sets take finitely many values, so the sequence is eventually
    periodic; each set is hashed to spot the first repeat.  An omega-limit
    set is invariant, so with ``invariant_only`` the cycle union is further
    intersected with the invariant part of the whole grid, which drops
    transient cells that the cycle keeps refilling.
    """
    seen: dict[bytes, int] = {}
    history: list[np.ndarray] = []
    S = A.mask
    for k in range(max_steps):
        key = CellSet(S).key()
        if key in seen:
            cycle = history[seen[key] :]
            out = np.logical_or.reduce(cycle) if cycle else S
            result = CellSet(out)
            if invariant_only:
                result = result & invariant_part(mf, CellSet.full(mf.grid.n_cells))
            return result
        seen[key] = k
        history.append(S)
        S = mf.step(S)
    raise RuntimeError("omega_limit: no cycle detected within max_steps")


def cell_hull(grid: Grid, S: CellSet):
    """``(lo, hi)`` corners of the smallest box covering the cells of ``S``, or None."""
    if not S:
        return None
    LO, HI = grid.cell_bounds(S.indices())
    return LO.min(axis=0), HI.max(axis=0)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_cellset(S: CellSet, path) -> None:
    with open(path, "w") as fh:
        for i in S.indices():
            fh.write(f"{i}\n")


def report_lines(report: IsolationReport, grid: Grid) -> list[str]:
    hull = cell_hull(grid, report.invariant)
    lines = [
        f"verdict={report.verdict}",
        f"lambda={_fmt(report.lam)}",
        f"h_tau={_fmt(report.h_tau)}",
        f"M={_fmt(report.M)}",
        f"grid={'x'.join(map(str, report.grid_counts))}",
        f"window={';'.join(f'{_fmt(iv.lo)},{_fmt(iv.hi)}' for iv in grid.window.intervals)}",
        f"neighborhood_cells={len(report.neighborhood)}",
        f"boundary_cells={len(report.boundary)}",
        f"invariant_cells={len(report.invariant)}",
        f"min_boundary_distance={_fmt(report.min_boundary_distance)}",
        f"prune_rounds={report.rounds}",
    ]
    if hull is not None:
        lo, hi = hull
        lines.append("invariant_hull=" + ";".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(lo, hi)))
    lines.append("semantics=solutions are followed only while they stay in the window")
    return lines


def write_report(report: IsolationReport, grid: Grid, path) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(report_lines(report, grid)) + "\n")


__all__.append("report_lines")
