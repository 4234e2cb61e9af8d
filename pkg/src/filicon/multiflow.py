"""Cubical grids and combinatorial outer approximations of the time-h map.

The map sends each cell ``c`` to the cells that can contain ``x(h_tau)`` for a
solution with ``x(0)`` in ``c`` that stays in the window.  Cell images are
computed by substep box propagation: over a substep of length ``dt`` every
solution from a box ``B`` stays in ``C = B + [-M dt, M dt]``, so it stays in
``E = B + [0, dt] F(C)`` and ends in ``B + dt F(E)``.  In one dimension the
two endpoints of a cell are propagated as well; solutions of a scalar
inclusion cannot cross the extremal solutions from the endpoints, which
keeps images narrow where the field contracts.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
import scipy.sparse as sp

from .field import FilippovFamily, bound, eval_boxes
from .geometry import Box, Interval, inflate
from .solver import SELECTIONS, integrate_batch

__all__ = [
    "Grid",
    "CellSet",
    "CombinatorialMultiflow",
    "MonoidReport",
    "build_outer_approx",
    "auto_htau",
    "reach_bound",
    "image",
    "transpose",
    "check_monoid",
    "write_edges",
]

_EPS = np.finfo(float).eps


class Grid:
    """Uniform cubical subdivision of ``window``; cells are indexed row-major."""

    def __init__(self, window: Box, counts: Iterable[int] | int):
        if isinstance(counts, (int, np.integer)):
            counts = (int(counts),) * window.dims
        counts = tuple(int(c) for c in counts)
        if len(counts) != window.dims:
            raise ValueError(f"need {window.dims} subdivision counts, got {len(counts)}")
        if any(c < 1 for c in counts):
            raise ValueError("degenerate grid: every axis needs at least one cell")
        if np.any(window.widths <= 0):
            raise ValueError("degenerate grid: window has zero width")
        self.window = window
        self.counts = counts
        self.dims = window.dims
        self.n_cells = int(np.prod(counts))
        self.widths = window.widths / np.array(counts)
        self.edges = [np.linspace(iv.lo, iv.hi, c + 1) for iv, c in zip(window.intervals, counts)]

    def __eq__(self, other):
        return isinstance(other, Grid) and self.window == other.window and self.counts == other.counts

    def __hash__(self):
        return hash((self.window, self.counts))

    def __repr__(self):
        return f"Grid({self.window!r}, {self.counts})"

    def refine(self, factor: int = 2) -> Grid:
        return Grid(self.window, tuple(c * factor for c in self.counts))

    def multi_index(self, idx) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(idx), self.counts), axis=-1)

    def ravel(self, multi) -> np.ndarray:
        multi = np.asarray(multi)
        return np.ravel_multi_index(tuple(multi[..., d] for d in range(self.dims)), self.counts)

    def cell_bounds(self, idx=None):
        """``(LO, HI)`` arrays of shape (m, dims) for the given cells (default all)."""
        idx = np.arange(self.n_cells) if idx is None else np.atleast_1d(np.asarray(idx))
        mi = self.multi_index(idx)
        LO = np.stack([self.edges[d][mi[:, d]] for d in range(self.dims)], 1)
        HI = np.stack([self.edges[d][mi[:, d] + 1] for d in range(self.dims)], 1)
        return LO, HI

    def cell_box(self, i: int) -> Box:
        LO, HI = self.cell_bounds([i])
        return Box.from_bounds(LO[0], HI[0])

    def axis_locate(self, d: int, x) -> np.ndarray:
        """Cell index along axis ``d`` (unclamped; monotone in ``x``)."""
        iv = self.window.intervals[d]
        return np.floor((np.asarray(x, dtype=float) - iv.lo) / self.widths[d]).astype(np.int64)

    def locate(self, X) -> np.ndarray:
        """Cell index of every row of ``X``; -1 outside the window.

        Each point gets exactly one cell; points on a shared face go to the
        upper cell and the upper window face to the last cell.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        inside = np.all((self.window.lo <= X) & (X <= self.window.hi), axis=1)
        multi = np.stack(
            [np.clip(self.axis_locate(d, X[:, d]), 0, self.counts[d] - 1) for d in range(self.dims)], 1
        )
        return np.where(inside, self.ravel(multi), -1)

    def window_boundary(self) -> np.ndarray:
        """Mask of cells touching the window boundary."""
        mi = self.multi_index(np.arange(self.n_cells))
        counts = np.array(self.counts)
        return np.any((mi == 0) | (mi == counts - 1), axis=1)

    def cells_in_box(self, box: Box) -> CellSet:
        """Cells lying inside ``box`` (up to a relative tolerance)."""
        LO, HI = self.cell_bounds()
        tol = 1e-9 * self.widths
        mask = np.all((LO >= box.lo - tol) & (HI <= box.hi + tol), axis=1)
        return CellSet(mask)

    def neighbors(self, mask: np.ndarray) -> np.ndarray:
        """Cells sharing a face, edge or corner with a cell of ``mask`` (mask excluded)."""
        arr = np.asarray(mask, dtype=bool).reshape(self.counts)
        pad = np.pad(arr, 1)
        out = np.zeros_like(pad)
        for shift in itertools.product((-1, 0, 1), repeat=self.dims):
            if any(shift):
                out |= np.roll(pad, shift, axis=tuple(range(self.dims)))
        inner = out[tuple(slice(1, -1) for _ in range(self.dims))]
        return inner.reshape(-1) & ~arr.reshape(-1)


class CellSet:
    """Dense set of grid cells stored as a boolean mask."""

    __slots__ = ("mask",)

    def __init__(self, mask):
        self.mask = np.asarray(mask, dtype=bool).copy()
        self.mask.setflags(write=False)

    @classmethod
    def empty(cls, n: int) -> CellSet:
        return cls(np.zeros(n, dtype=bool))

    @classmethod
    def full(cls, n: int) -> CellSet:
        return cls(np.ones(n, dtype=bool))

    @classmethod
    def from_indices(cls, n: int, idx) -> CellSet:
        mask = np.zeros(n, dtype=bool)
        idx = np.asarray(list(idx) if not isinstance(idx, np.ndarray) else idx, dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= n):
            raise IndexError("cell index out of range")
        mask[idx] = True
        return cls(mask)

    @property
    def size(self) -> int:
        return self.mask.size

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    def key(self) -> bytes:
        return np.packbits(self.mask).tobytes()

    def __len__(self):
        return int(self.mask.sum())

    def __bool__(self):
        return bool(self.mask.any())

    def __contains__(self, i):
        return 0 <= i < self.mask.size and bool(self.mask[i])

    def __iter__(self):
        return iter(self.indices().tolist())

    def __or__(self, other):
        return CellSet(self.mask | other.mask)

    def __and__(self, other):
        return CellSet(self.mask & other.mask)

    def __sub__(self, other):
        return CellSet(self.mask & ~other.mask)

    def __le__(self, other):
        return not np.any(self.mask & ~other.mask)

    def __eq__(self, other):
        return isinstance(other, CellSet) and np.array_equal(self.mask, other.mask)

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        idx = self.indices()
        shown = ", ".join(map(str, idx[:8])) + (", ..." if idx.size > 8 else "")
        return f"CellSet({len(self)}/{self.size}: {shown})"


class CombinatorialMultiflow:
    """Cell map with a CSR adjacency; ``adj[i, j] != 0`` means ``j`` is in the image of ``i``.

    ``dual`` marks a transposed (backward-time) map.
    """

    def __init__(self, grid: Grid, h_tau: float, lam: float, adj, M: float, dual: bool = False, delta: float = 0.0):
        adj = sp.csr_matrix(adj, dtype=np.int32)
        adj.sum_duplicates()
        adj.data[:] = 1
        if adj.shape != (grid.n_cells, grid.n_cells):
            raise ValueError("adjacency shape does not match the grid")
        self.grid = grid
        self.h_tau = float(h_tau)
        self.lam = float(lam)
        self.adj = adj
        self.M = float(M)
        self.dual = dual
        self.delta = float(delta)
        self._adjT = None

    @property
    def adjT(self):
        if self._adjT is None:
            self._adjT = self.adj.T.tocsr()
        return self._adjT

    @property
    def n_edges(self) -> int:
        return int(self.adj.nnz)

    def successors(self, i: int) -> CellSet:
        row = self.adj.indices[self.adj.indptr[i] : self.adj.indptr[i + 1]]
        return CellSet.from_indices(self.grid.n_cells, row)

    def step(self, mask: np.ndarray) -> np.ndarray:
        """Union of images of the cells in ``mask`` (boolean in, boolean out)."""
        return (self.adjT @ mask.astype(np.int32)) > 0

    def preimage_step(self, mask: np.ndarray) -> np.ndarray:
        """Cells with at least one successor in ``mask``."""
        return (self.adj @ mask.astype(np.int32)) > 0

    def same_map(self, other: CombinatorialMultiflow) -> bool:
        return (
            self.grid == other.grid
            and self.h_tau == other.h_tau
            and self.lam == other.lam
            and self.dual == other.dual
            and (self.adj != other.adj).nnz == 0
        )

    def __eq__(self, other):
        return isinstance(other, CombinatorialMultiflow) and self.same_map(other)

    __hash__ = None

    def __repr__(self):
        kind = "Dual" if self.dual else "Combinatorial"
        return f"{kind}Multiflow({self.grid!r}, h_tau={self.h_tau}, lambda={self.lam}, edges={self.n_edges})"


DualMultiflow = CombinatorialMultiflow


# -- construction ----------------------------------------------------------------


def _out(lo, hi):
    # a few ulps of outward slack cover the rounding of the interval updates
    lo = lo - (np.abs(lo) * 4 * _EPS + 1e-300)
    hi = hi + (np.abs(hi) * 4 * _EPS + 1e-300)
    return lo, hi


def _field_bounds(fam, lam, lo, hi, delta):
    if delta > 0:
        lo, hi = lo - delta, hi + delta
    return eval_boxes(fam, lo, hi, lam)


def _propagate(fam, lam, LO, HI, h, substeps, M, clip_lo, clip_hi, delta, refine=2):
    """Enclose the time-``h`` endpoints of solutions from the boxes ``[LO, HI]``.

    Only solutions staying inside the clip box are covered.  Returns
    ``(lo, hi, alive)``; rows that are not alive have empty images.
    """
    lo, hi = LO.astype(float).copy(), HI.astype(float).copy()
    alive = np.ones(len(lo), dtype=bool)
    dt = h / substeps
    for _ in range(substeps):
        r = M * dt * (1 + 4 * _EPS)
        clo, chi = np.maximum(lo - r, clip_lo), np.minimum(hi + r, clip_hi)
        flo, fhi = _field_bounds(fam, lam, clo, chi, delta)
        elo, ehi = clo, chi
        for _ in range(1 + refine):
            # x(t) in B + [0, dt] F(E) for any enclosure E of the substep
            nelo, nehi = _out(lo + dt * np.minimum(flo, 0.0), hi + dt * np.maximum(fhi, 0.0))
            elo, ehi = np.maximum(nelo, elo), np.minimum(nehi, ehi)
            flo, fhi = _field_bounds(fam, lam, elo, ehi, delta)
        nlo, nhi = _out(lo + dt * flo, hi + dt * fhi)
        nlo, nhi = np.maximum(nlo, clip_lo), np.minimum(nhi, clip_hi)
        empty = np.any(nlo > nhi, axis=1) | ~np.all(np.isfinite(nlo) & np.isfinite(nhi), axis=1)
        alive &= ~empty
        # keep dead rows well-formed so later evaluations stay finite
        lo = np.where(alive[:, None], nlo, clip_lo)
        hi = np.where(alive[:, None], nhi, clip_lo)
    return lo, hi, alive


def reach_bound(fam: FilippovFamily, window: Box, lam: float, h_tau: float, delta: float = 0.0, max_iter: int = 60):
    """``(R, M_R)`` with ``h_tau * M_R <= R`` where ``M_R`` bounds ``F`` on the ``R``-inflated window.

    Every solution starting in the window then stays in the inflated window
    up to time ``h_tau``.  Returns ``None`` if no such radius is found.
    """
    lam_iv = Interval.point(lam)
    R = h_tau * bound(fam, inflate(window, delta), lam_iv)
    for _ in range(max_iter):
        M_R = bound(fam, inflate(window, R + delta), lam_iv)
        if not math.isfinite(M_R):
            return None
        if h_tau * M_R <= R:
            return R, M_R
        R = 1.25 * h_tau * M_R
    return None


def auto_htau(fam: FilippovFamily, lam: float, grid: Grid) -> float:
    """Horizon giving ``v_min h >= 4`` cell widths under a drift floor, else ``10 w / M``."""
    LO, HI = grid.cell_bounds()
    lo, hi = eval_boxes(fam, LO, HI, lam)
    gap = np.maximum(np.maximum(lo, -hi), 0.0)  # per-axis distance of F(cell) from 0
    v_min = float(np.min(np.max(gap, axis=1)))
    w = float(np.max(grid.widths))
    if v_min > 0:
        return 4.0 * w / v_min
    M = bound(fam, grid.window, Interval.point(lam))
    return 10.0 * w / M if M > 0 else 10.0 * w


def _box_to_cells(grid: Grid, lo, hi, alive):
    """Row/column arrays of the sparse adjacency for image boxes ``[lo, hi]``."""
    wlo, whi = grid.window.lo, grid.window.hi
    alive = alive & np.all((hi >= wlo) & (lo <= whi), axis=1)
    ranges = []
    for d in range(grid.dims):
        a = np.clip(grid.axis_locate(d, np.maximum(lo[:, d], wlo[d])), 0, grid.counts[d] - 1)
        b = np.clip(grid.axis_locate(d, np.minimum(hi[:, d], whi[d])), 0, grid.counts[d] - 1)
        ranges.append((a, b))
    rows, cols = [], []
    src = np.flatnonzero(alive)
    if grid.dims == 1:
        a, b = ranges[0]
        lens = (b - a + 1)[src]
        rows = np.repeat(src, lens)
        starts = np.repeat(a[src], lens)
        offs = np.arange(lens.sum()) - np.repeat(np.cumsum(lens) - lens, lens)
        return rows, starts + offs
    for i in src:
        axes = [np.arange(ranges[d][0][i], ranges[d][1][i] + 1) for d in range(grid.dims)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, grid.dims)
        cols.append(grid.ravel(mesh))
        rows.append(np.full(len(mesh), i))
    if not rows:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    return np.concatenate(rows), np.concatenate(cols)


def build_outer_approx(
    fam: FilippovFamily,
    lam: float,
    grid: Grid,
    h_tau: float,
    substeps: int | None = None,
    delta: float = 0.0,
    slack_cells: int = 0,
) -> CombinatorialMultiflow:
    """Outer approximation of the time-``h_tau`` map on ``grid``.

    ``delta > 0`` covers delta-solutions, i.e. solutions of
    ``x' in F(B_delta(x))``; Euler polygons with step ``s`` are such
    solutions for ``delta = M s``.  ``slack_cells`` widens every image by
    that many cells per axis.  By default the substep count keeps
    ``M dt`` below one cell width (at least 16, at most 1024 substeps).
    """
    if not (h_tau >= 0) or not math.isfinite(h_tau):
        raise ValueError("h_tau must be a nonnegative finite number")
    if substeps is not None and substeps < 1:
        raise ValueError("substeps must be positive")
    fam.check_lambda(lam)
    n = grid.n_cells
    window = grid.window
    if h_tau == 0:
        return CombinatorialMultiflow(grid, 0.0, lam, sp.identity(n, format="csr"), 0.0, delta=delta)

    M = bound(fam, inflate(window, delta), Interval.point(lam))
    if substeps is None:
        substeps = int(min(1024, max(16, math.ceil(M * h_tau / float(np.min(grid.widths))))))
    reach = reach_bound(fam, window, lam, h_tau, delta) if grid.dims == 1 else None
    if reach is not None:
        # endpoints only: the comparison argument makes the cell-box pass redundant
        R, M_R = reach
        outer = inflate(window, R)
        pts = grid.edges[0][:, None]
        plo, phi, palive = _propagate(fam, lam, pts, pts, h_tau, substeps, M_R, outer.lo, outer.hi, delta)
        lo, hi = plo[:-1], phi[1:]
        alive = palive[:-1] & palive[1:] & ~np.any(lo > hi, axis=1)
        M = max(M, M_R)
    else:
        LO, HI = grid.cell_bounds()
        lo, hi, alive = _propagate(fam, lam, LO, HI, h_tau, substeps, M, window.lo, window.hi, delta)

    if slack_cells:
        lo = lo - slack_cells * grid.widths
        hi = hi + slack_cells * grid.widths
    rows, cols = _box_to_cells(grid, lo, hi, alive)
    adj = sp.csr_matrix((np.ones(len(rows), dtype=np.int32), (rows, cols)), shape=(n, n))
    return CombinatorialMultiflow(grid, h_tau, lam, adj, M, delta=delta)


# -- queries -----------------------------------------------------------------------


def image(mf: CombinatorialMultiflow, A: CellSet, steps: int = 1) -> CellSet:
    """``steps``-fold image of ``A``; zero steps return ``A``."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    mask = A.mask
    for _ in range(steps):
        if not mask.any():
            break
        mask = mf.step(mask)
    return CellSet(mask)


def transpose(mf: CombinatorialMultiflow) -> CombinatorialMultiflow:
    out = CombinatorialMultiflow(mf.grid, mf.h_tau, mf.lam, mf.adjT, mf.M, dual=not mf.dual, delta=mf.delta)
    out._adjT = mf.adj
    return out


@dataclass
class MonoidReport:
    identity_ok: bool
    samples: int
    kept: int  # samples whose trajectory stayed in the window
    violations: list[tuple[int, int]] = field(default_factory=list)  # (start cell, hit cell)
    horizon_violations: list[tuple[int, int]] = field(default_factory=list)  # vs the 2 h_tau map

    @property
    def ok(self) -> bool:
        return self.identity_ok and not self.violations and not self.horizon_violations


def check_monoid(
    mf: CombinatorialMultiflow,
    samples: int = 1000,
    fam: FilippovFamily | None = None,
    mf2: CombinatorialMultiflow | None = None,
    euler_steps: int = 8,
    seed: int = 0,
) -> MonoidReport:
    """Identity law plus sampled containment ``Phi^{2h}(x) in image(mf, cell(x), 2)``.

    Sampled solutions are Euler polygons over ``[0, 2 h_tau]`` with
    ``euler_steps`` steps per ``h_tau``; ``mf`` must have been built with
    ``delta >= M h_tau / euler_steps`` for them to be covered.  If ``mf2``
    (a map of horizon ``2 h_tau`` on the same grid) is given, its one-step
    images are checked against the same samples.
    """
    grid = mf.grid
    ident = build_outer_approx(fam, mf.lam, grid, 0.0) if fam is not None else None
    identity_ok = ident is None or (ident.adj != sp.identity(grid.n_cells, format="csr")).nnz == 0
    report = MonoidReport(identity_ok, samples, 0)
    if fam is None or samples <= 0 or mf.h_tau == 0:
        return report
    if mf2 is not None and mf2.grid != grid:
        raise ValueError("mf2 must use the same grid")
    rng = np.random.default_rng(seed)
    cells = rng.integers(0, grid.n_cells, samples)
    LO, HI = grid.cell_bounds(cells)
    X0 = LO + rng.random(LO.shape) * (HI - LO)
    sel_idx = rng.integers(0, len(SELECTIONS), samples)
    h = mf.h_tau / euler_steps
    for s, name in enumerate(SELECTIONS):
        pick = np.flatnonzero(sel_idx == s)
        if pick.size == 0:
            continue
        X, alive = integrate_batch(fam, X0[pick], mf.lam, 2 * mf.h_tau, h, name, grid.window, seed=seed + s)
        hit = grid.locate(X)
        for j in np.flatnonzero(alive):
            c, target = int(cells[pick[j]]), int(hit[j])
            report.kept += 1
            start = np.zeros(grid.n_cells, dtype=bool)
            start[c] = True
            if not mf.step(mf.step(start))[target]:
                report.violations.append((c, target))
            if mf2 is not None and not mf2.step(start)[target]:
                report.horizon_violations.append((c, target))
    return report


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_edges(mf: CombinatorialMultiflow, path) -> None:
    """Edge list ``src dst`` with a ``#`` header carrying the grid metadata."""
    window = ";".join(f"{_fmt(iv.lo)},{_fmt(iv.hi)}" for iv in mf.grid.window.intervals)
    coo = mf.adj.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        fh.write(
            f"# window={window} subdivisions={'x'.join(map(str, mf.grid.counts))} "
            f"h_tau={_fmt(mf.h_tau)} lambda={_fmt(mf.lam)} M={_fmt(mf.M)} dual={int(mf.dual)}\n"
        )
        for r, c in zip(coo.row[order], coo.col[order]):
            fh.write(f"{r} {c}\n")
