"""Piecewise vector fields, their Filippov convexification and enclosures.

A :class:`PiecewiseSpec` lists pieces, each guarded by sign conditions on
switching expressions.  The convexified set value at ``x`` is the box hull
of every piece whose *closed* guard region contains ``x``; away from the
switching sets exactly one piece is active and the value is single-valued.
The convex coefficient is never materialised: the box hull of the piece
values already contains every convex combination.

A :class:`FilippovFamily` adds the parameter: an ordinary member used for
every lambda and an optional explicitly declared member used at lambda = 0.
The lambda = 0 member is never inferred as a pointwise limit.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .expr import BinOp, Expr, Lam, Neg, Num, Var
from .geometry import Box, Interval, ValueEnclosure, hull, inflate
from .intervals import IA

__all__ = [
    "SIGNS",
    "SWITCH_TOL",
    "DomainError",
    "Guard",
    "Piece",
    "PiecewiseSpec",
    "FilippovFamily",
    "USCWitness",
    "SearchParams",
    "convexify",
    "eval_value",
    "eval_box",
    "eval_points",
    "eval_boxes",
    "active_pieces",
    "delta_inflate",
    "bound",
    "usc_falsify",
]

SIGNS = (">", "<", "=")
# |h| at or below this counts as being on the switching set
SWITCH_TOL = 1e-12


class DomainError(ValueError):
    pass


def _affine(e: Expr, lam: float | None):
    """``(d, a, b)`` with ``e = a * x_d + b`` (``d = 0`` if constant), else None."""
    if isinstance(e, Num):
        return 0, 0.0, float(e.value)
    if isinstance(e, Lam):
        return None if lam is None else (0, 0.0, float(lam))
    if isinstance(e, Var):
        return e.index, 1.0, 0.0
    if isinstance(e, Neg):
        r = _affine(e.arg, lam)
        return None if r is None else (r[0], -r[1], -r[2])
    if isinstance(e, BinOp):
        l, r = _affine(e.left, lam), _affine(e.right, lam)
        if l is None or r is None:
            return None
        if e.op in "+-":
            if l[0] and r[0] and l[0] != r[0]:
                return None
            s = 1.0 if e.op == "+" else -1.0
            return l[0] or r[0], l[1] + s * r[1], l[2] + s * r[2]
        if e.op == "*":
            if l[0] and r[0]:
                return None
            if l[0]:
                l, r = r, l
            return r[0], l[2] * r[1], l[2] * r[2]
        if e.op == "/" and not r[0] and r[2] != 0:
            return l[0], l[1] / r[2], l[2] / r[2]
    return None


@dataclass(frozen=True)
class Guard:
    expr: Expr
    sign: str

    def __post_init__(self):
        if self.sign not in SIGNS:
            raise ValueError(f"guard sign must be one of {SIGNS}, got {self.sign!r}")

    def restrict(self, LO, HI, lam: IA):
        """Shrink boxes to the closed guard region when the guard is affine in one variable.

        The cut is loosened by a relative margin plus the switching
        tolerance, so it never removes points the pointwise test accepts.
        """
        point_lam = float(lam.lo) if np.ndim(lam.lo) == 0 and lam.lo == lam.hi else None
        aff = _affine(self.expr, point_lam)
        if aff is None or aff[0] == 0 or aff[1] == 0:
            return LO, HI
        d, a, b = aff[0] - 1, aff[1], aff[2]
        cut = -b / a
        margin = (abs(cut) + 1.0) * 1e-12 + SWITCH_TOL / abs(a)
        lo_cut, hi_cut = -np.inf, np.inf
        if self.sign in ">=" and a > 0 or self.sign in "<=" and a < 0:
            lo_cut = cut - margin  # region x_d >= cut
        if self.sign in "<=" and a > 0 or self.sign in ">=" and a < 0:
            hi_cut = cut + margin  # region x_d <= cut
        LO, HI = LO.copy(), HI.copy()
        LO[:, d] = np.maximum(LO[:, d], lo_cut)
        HI[:, d] = np.minimum(HI[:, d], hi_cut)
        return LO, HI

    def closure_point(self, h):
        if self.sign == ">":
            return h >= -SWITCH_TOL
        if self.sign == "<":
            return h <= SWITCH_TOL
        return np.abs(h) <= SWITCH_TOL

    def strict_point(self, h):
        if self.sign == ">":
            return h > SWITCH_TOL
        if self.sign == "<":
            return h < -SWITCH_TOL
        return np.abs(h) <= SWITCH_TOL

    def closure_box(self, h: IA):
        if self.sign == ">":
            return h.hi >= 0.0
        if self.sign == "<":
            return h.lo <= 0.0
        return h.contains_zero()


@dataclass(frozen=True)
class Piece:
    guards: tuple[Guard, ...]
    components: tuple[Expr, ...]


@dataclass(frozen=True)
class PiecewiseSpec:
    dims: int
    pieces: tuple[Piece, ...]

    def __post_init__(self):
        if self.dims < 1:
            raise ValueError("dims must be positive")
        if not self.pieces:
            raise ValueError("a piecewise definition needs at least one piece")
        for k, piece in enumerate(self.pieces):
            if len(piece.components) != self.dims:
                raise ValueError(
                    f"piece {k} has {len(piece.components)} components, expected {self.dims}"
                )
            exprs = list(piece.components) + [g.expr for g in piece.guards]
            for e in exprs:
                if e.max_var() > self.dims:
                    raise ValueError(f"piece {k} uses x{e.max_var()} beyond dims={self.dims}")

    def uses_lambda(self) -> bool:
        return any(
            e.uses_lambda()
            for p in self.pieces
            for e in itertools.chain(p.components, (g.expr for g in p.guards))
        )

    # -- vectorised evaluation ---------------------------------------------

    def point_values(self, X: np.ndarray, lam):
        """Enclosure bounds at the rows of ``X`` (shape (m, dims))."""
        X = np.asarray(X, dtype=float)
        xs = [X[:, d] for d in range(self.dims)]
        m = X.shape[0]
        lo = np.full((m, self.dims), np.inf)
        hi = np.full((m, self.dims), -np.inf)
        for piece in self.pieces:
            active = np.ones(m, dtype=bool)
            for g in piece.guards:
                h = np.broadcast_to(g.expr.evaluate(xs, lam), (m,))
                active &= g.closure_point(h)
            if not active.any():
                continue
            for d, comp in enumerate(piece.components):
                v = np.broadcast_to(np.asarray(comp.evaluate(xs, lam), dtype=float), (m,))
                lo[:, d] = np.where(active, np.minimum(lo[:, d], v), lo[:, d])
                hi[:, d] = np.where(active, np.maximum(hi[:, d], v), hi[:, d])
        return lo, hi

    def box_values(self, LO: np.ndarray, HI: np.ndarray, lam: IA):
        """Enclosure bounds over the boxes ``[LO[i], HI[i]]``."""
        LO = np.asarray(LO, dtype=float)
        HI = np.asarray(HI, dtype=float)
        m = LO.shape[0]
        lo = np.full((m, self.dims), np.inf)
        hi = np.full((m, self.dims), -np.inf)
        for piece in self.pieces:
            plo, phi = LO, HI
            for g in piece.guards:
                plo, phi = g.restrict(plo, phi, lam)
            active = np.all(plo <= phi, axis=1)
            plo = np.where(active[:, None], plo, LO)
            phi = np.where(active[:, None], phi, HI)
            pxs = [IA(plo[:, d], phi[:, d]) for d in range(self.dims)]
            for g in piece.guards:
                h = g.expr.enclose(pxs, lam)
                active &= np.broadcast_to(g.closure_box(h), (m,))
            if not active.any():
                continue
            for d, comp in enumerate(piece.components):
                v = comp.enclose(pxs, lam)
                vlo = np.broadcast_to(v.lo, (m,))
                vhi = np.broadcast_to(v.hi, (m,))
                lo[:, d] = np.where(active, np.minimum(lo[:, d], vlo), lo[:, d])
                hi[:, d] = np.where(active, np.maximum(hi[:, d], vhi), hi[:, d])
        return lo, hi


@dataclass(frozen=True)
class FilippovFamily:
    """Lambda-parameterised convexified field ``F(x, lambda)``."""

    dims: int
    lam_range: Interval
    regular: PiecewiseSpec
    at_zero: PiecewiseSpec | None = None
    name: str = ""

    def member(self, lam: float) -> PiecewiseSpec:
        self.check_lambda(lam)
        if lam == 0 and self.at_zero is not None:
            return self.at_zero
        return self.regular

    def check_lambda(self, lam: float) -> None:
        if not (self.lam_range.lo <= lam <= self.lam_range.hi):
            raise DomainError(f"lambda={lam} outside declared range {self.lam_range!r}")


def convexify(
    spec: PiecewiseSpec,
    lam_range: Interval = Interval(0.0, 0.0),
    at_zero: PiecewiseSpec | None = None,
    name: str = "",
) -> FilippovFamily:
    if at_zero is not None and at_zero.dims != spec.dims:
        raise ValueError("lambda=0 member has a different dimension")
    return FilippovFamily(spec.dims, lam_range, spec, at_zero, name)


# -- evaluation --------------------------------------------------------------


def eval_points(fam: FilippovFamily, X, lam: float):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return fam.member(lam).point_values(X, np.float64(lam))


def eval_boxes(fam: FilippovFamily, LO, HI, lam: float | Interval):
    LO = np.atleast_2d(np.asarray(LO, dtype=float))
    HI = np.atleast_2d(np.asarray(HI, dtype=float))
    if isinstance(lam, Interval):
        fam.check_lambda(lam.lo)
        fam.check_lambda(lam.hi)
        if lam.lo == lam.hi:
            return eval_boxes(fam, LO, HI, lam.lo)
        lo, hi = fam.regular.box_values(LO, HI, IA(lam.lo, lam.hi))
        if fam.at_zero is not None and 0.0 in lam:
            zlo, zhi = fam.at_zero.box_values(LO, HI, IA.const(0.0))
            lo, hi = np.minimum(lo, zlo), np.maximum(hi, zhi)
        return lo, hi
    return fam.member(lam).box_values(LO, HI, IA.const(lam))


def _as_enclosure(lo, hi) -> ValueEnclosure:
    if np.any(lo > hi):
        return ValueEnclosure.empty()
    return ValueEnclosure.from_bounds(lo, hi)


def eval_value(fam: FilippovFamily, x, lam: float) -> ValueEnclosure:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (fam.dims,):
        raise DomainError(f"expected a point of dimension {fam.dims}")
    if not np.all(np.isfinite(x)):
        raise DomainError(f"non-finite point {x}")
    lo, hi = eval_points(fam, x[None, :], lam)
    if np.any(lo > hi):
        raise DomainError(f"no piece is active at x={x.tolist()}, lambda={lam}")
    if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
        raise DomainError(f"field is not finite at x={x.tolist()}, lambda={lam}")
    return ValueEnclosure.from_bounds(lo[0], hi[0])


def eval_box(fam: FilippovFamily, b: Box, lam: float | Interval) -> ValueEnclosure:
    lo, hi = eval_boxes(fam, b.lo[None, :], b.hi[None, :], lam)
    return _as_enclosure(lo[0], hi[0])


def active_pieces(fam: FilippovFamily, x, lam: float):
    """``(piece, value)`` for each piece whose closed region contains ``x``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xs = [x[d : d + 1] for d in range(fam.dims)]
    out = []
    for piece in fam.member(lam).pieces:
        if all(bool(g.closure_point(g.expr.evaluate(xs, lam))) for g in piece.guards):
            v = np.array([float(np.asarray(c.evaluate(xs, lam)).reshape(-1)[0]) for c in piece.components])
            out.append((piece, v))
    return out


def delta_inflate(fam: FilippovFamily, x, lam: float, delta: float) -> ValueEnclosure:
    """``B_delta(co F(B_delta(x)))`` as a box."""
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    ball = inflate(Box.point(x), delta)
    return ValueEnclosure(inflate(hull([eval_box(fam, ball, lam)]).box, delta))


def delta_inflate_many(fam: FilippovFamily, X, lam: float, delta: float):
    """Vectorised :func:`delta_inflate`: bounds arrays for every row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    lo, hi = eval_boxes(fam, np.nextafter(X - delta, -np.inf), np.nextafter(X + delta, np.inf), lam)
    if delta > 0:
        lo, hi = np.nextafter(lo - delta, -np.inf), np.nextafter(hi + delta, np.inf)
    return lo, hi


def _cell_bounds(window: Box, per_axis: int):
    edges = [np.linspace(iv.lo, iv.hi, per_axis + 1) for iv in window.intervals]
    lows = np.array(list(itertools.product(*[e[:-1] for e in edges])))
    highs = np.array(list(itertools.product(*[e[1:] for e in edges])))
    return lows, highs


def bound(
    fam: FilippovFamily,
    window: Box,
    lam_range: Interval | None = None,
    cells_per_axis: int | None = None,
    lam_pieces: int = 16,
) -> float:
    """Rigorous sup-norm bound ``M`` of ``F`` over ``window x lam_range``.

    The window is tiled into cells and the parameter range into
    subintervals; each tile is enclosed by interval evaluation.  Tiles whose
    parameter interval touches a singular value (e.g. ``x/lambda`` at 0)
    are still enclosed, because division by an interval containing zero
    yields the whole line and bounded functions clamp it.
    """
    lam_range = fam.lam_range if lam_range is None else lam_range
    if cells_per_axis is None:
        cells_per_axis = {1: 256, 2: 48}.get(fam.dims, 12)
    LO, HI = _cell_bounds(window, cells_per_axis)
    if lam_range.lo == lam_range.hi:
        lo, hi = eval_boxes(fam, LO, HI, lam_range.lo)
        return float(np.max(np.maximum(np.abs(lo), np.abs(hi))))
    edges = np.linspace(lam_range.lo, lam_range.hi, lam_pieces + 1)
    M = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        lo, hi = eval_boxes(fam, LO, HI, Interval(a, b))
        M = max(M, float(np.max(np.maximum(np.abs(lo), np.abs(hi)))))
    if fam.at_zero is not None and 0.0 in lam_range:
        lo, hi = eval_boxes(fam, LO, HI, 0.0)
        M = max(M, float(np.max(np.maximum(np.abs(lo), np.abs(hi)))))
    return M


# -- upper-semicontinuity falsifier ------------------------------------------


@dataclass(frozen=True)
class USCWitness:
    base_x: tuple[float, ...]
    base_lam: float
    probe_x: tuple[float, ...]
    probe_lam: float
    eps: float
    separation: float
    radius: float


@dataclass(frozen=True)
class SearchParams:
    window: Box | None = None
    base_points: int = 41
    probe_points: int = 41
    lam_probes: int = 21
    radii: tuple[float, ...] = (0.1, 0.03, 0.01, 3e-3, 1e-3, 3e-4, 1e-4)
    extra_bases: tuple[tuple[float, ...], ...] = field(default_factory=tuple)


def _grid(lo, hi, n):
    axes = [np.linspace(a, b, n) for a, b in zip(lo, hi)]
    return np.array(list(itertools.product(*axes)))


def usc_falsify(
    fam: FilippovFamily,
    lam0: float,
    eps: float,
    search: SearchParams | None = None,
) -> USCWitness | None:
    """Search for a point where ``F(y, l) ⊄ B_eps(F(x, lam0))`` persists.

    Base points lie on a grid over the window.  For every probe radius in
    the (shrinking) schedule, probes ``(y, l)`` are sampled in the box of
    that radius around each base; a base is reported only if violations
    remain at every radius down to the smallest.  Finding nothing is not a
    proof of upper-semicontinuity.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    search = search or SearchParams()
    if search.window is None:
        raise ValueError("search window is required")
    window = search.window
    fam.check_lambda(lam0)
    n = fam.dims
    base_n = max(2, round(search.base_points ** (1.0 / n))) if n > 1 else search.base_points
    bases = _grid(window.lo, window.hi, base_n)
    if search.extra_bases:
        bases = np.vstack([bases, np.asarray(search.extra_bases, dtype=float)])
    blo, bhi = eval_points(fam, bases, lam0)
    blo = np.nextafter(blo - eps, -np.inf)
    bhi = np.nextafter(bhi + eps, np.inf)

    probe_n = max(3, round(search.probe_points ** (1.0 / n))) if n > 1 else search.probe_points
    offsets = _grid(-np.ones(n), np.ones(n), probe_n)
    alive = np.ones(len(bases), dtype=bool)
    best: dict[int, tuple[float, np.ndarray, float]] = {}
    for r in search.radii:
        lams = np.linspace(lam0 - r, lam0 + r, search.lam_probes)
        lams = np.unique(np.clip(np.append(lams, lam0), fam.lam_range.lo, fam.lam_range.hi))
        sep = np.zeros(len(bases))
        arg: dict[int, tuple[np.ndarray, float]] = {}
        live_idx = np.flatnonzero(alive)
        if live_idx.size == 0:
            return None
        P = (bases[live_idx, None, :] + r * offsets[None, :, :]).reshape(-1, n)
        for lam in lams:
            plo, phi = eval_points(fam, P, float(lam))
            gap = np.maximum(blo[live_idx].repeat(len(offsets), 0) - plo, phi - bhi[live_idx].repeat(len(offsets), 0))
            gap = np.nan_to_num(gap.max(axis=1), nan=np.inf).reshape(len(live_idx), len(offsets))
            k = gap.argmax(axis=1)
            g = gap[np.arange(len(live_idx)), k]
            for j, b in enumerate(live_idx):
                if g[j] > sep[b]:
                    sep[b] = g[j]
                    arg[b] = (P[j * len(offsets) + k[j]], float(lam))
        alive &= sep > 0
        for b in np.flatnonzero(alive):
            best[b] = (sep[b], *arg[b])
    if not alive.any():
        return None
    b = max(np.flatnonzero(alive), key=lambda i: best[i][0])
    s, y, lam = best[b]
    return USCWitness(
        base_x=tuple(bases[b].tolist()),
        base_lam=float(lam0),
        probe_x=tuple(np.asarray(y).tolist()),
        probe_lam=lam,
        eps=eps,
        separation=float(s),
        radius=search.radii[-1],
    )

