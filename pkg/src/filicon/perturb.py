"""Parameter sweeps of isolation verdicts and the lambda-approximation checks.

A sweep builds one outer approximation per sampled lambda and records an
independent isolation verdict for each.  The reported radius ``eps_star``
is read off the samples only: the largest ``r`` such that every sampled
``|lambda| <= r`` is certified, provided lambda = 0 itself is.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .conley import ISOLATING, cell_hull, check_isolation
from .field import FilippovFamily, delta_inflate_many, eval_points
from .geometry import Box
from .multiflow import Grid, auto_htau, build_outer_approx
from .solver import Trajectory

__all__ = [
    "SweepRow",
    "RobustnessReport",
    "PertAppxResult",
    "isolation_sweep",
    "check_pertappx",
    "verify_eps_solution",
    "write_sweep_csv",
    "SWEEP_HEADER",
]

SWEEP_HEADER = ("lambda", "verdict", "inv_cell_count", "min_boundary_distance", "grid_cells", "h_tau")


@dataclass(frozen=True)
class SweepRow:
    lam: float
    verdict: str
    inv_cell_count: int
    min_boundary_distance: float
    grid_counts: tuple[int, ...]
    h_tau: float
    refinements: int
    inv_hull: tuple[tuple[float, ...], tuple[float, ...]] | None

    @property
    def grid_cells(self) -> int:
        return int(np.prod(self.grid_counts))


@dataclass(frozen=True)
class RobustnessReport:
    rows: tuple[SweepRow, ...]
    eps_star: float
    zero_isolating: bool
    neighborhood: Box
    window: Box
    clipped: bool = False  # the neighborhood reaches the window boundary

    def row(self, lam: float) -> SweepRow:
        for r in self.rows:
            if r.lam == lam:
                return r
        raise KeyError(lam)


@dataclass(frozen=True)
class PertAppxResult:
    delta: float  # every sampled 0 < |lambda| < delta passed
    # (x, lambda, lo, hi) with lo/hi the value enclosure of F(x, lambda)
    witness: tuple[tuple[float, ...], float, tuple[float, ...], tuple[float, ...]] | None = None
    allowed: tuple[tuple[float, ...], tuple[float, ...]] | None = None
    probes: tuple[float, ...] = field(default_factory=tuple)


def _eps_star(rows: Sequence[SweepRow]) -> tuple[float, bool]:
    zero = [r for r in rows if r.lam == 0.0]
    zero_ok = bool(zero) and all(r.verdict == ISOLATING for r in zero)
    if not zero_ok:
        return 0.0, False
    eps = 0.0
    for mag in sorted({abs(r.lam) for r in rows}):
        if all(r.verdict == ISOLATING for r in rows if abs(r.lam) <= mag):
            eps = mag
        else:
            break
    return eps, True


def isolation_sweep(
    fam: FilippovFamily,
    window: Box,
    N: Box,
    lam_samples: Sequence[float],
    counts: int | Sequence[int] = 512,
    htau: float | None = None,
    budget: int = 3,
    substeps: int | None = None,
) -> RobustnessReport:
    """Isolation verdict of ``N`` at each sampled lambda.

    ``htau=None`` picks the horizon per lambda with :func:`auto_htau`.  An
    Inconclusive verdict is retried up to ``budget`` times on a grid with
    doubled subdivisions and halved horizon.
    """
    lams = [float(l) for l in lam_samples]
    if 0.0 not in lams:
        raise ValueError("the lambda samples must include 0")
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    for l in lams:
        fam.check_lambda(l)
    rows = []
    for lam in lams:
        grid = Grid(window, counts)
        h = htau if htau is not None else auto_htau(fam, lam, grid)
        for attempt in range(budget + 1):
            mf = build_outer_approx(fam, lam, grid, h, substeps=substeps)
            rep = check_isolation(mf, grid.cells_in_box(N))
            if rep.isolating or attempt == budget:
                break
            grid, h = grid.refine(2), h / 2
        hull = cell_hull(grid, rep.invariant)
        rows.append(
            SweepRow(
                lam=lam,
                verdict=rep.verdict,
                inv_cell_count=len(rep.invariant),
                min_boundary_distance=rep.min_boundary_distance,
                grid_counts=grid.counts,
                h_tau=h,
                refinements=attempt,
                inv_hull=None if hull is None else (tuple(hull[0].tolist()), tuple(hull[1].tolist())),
            )
        )
    eps, zero_ok = _eps_star(rows)
    clipped = bool(np.any(N.lo <= window.lo) or np.any(N.hi >= window.hi))
    return RobustnessReport(tuple(rows), eps, zero_ok, N, window, clipped)


def check_pertappx(
    fam: FilippovFamily,
    eps: float,
    lam_probe: Sequence[float],
    x_samples,
) -> PertAppxResult:
    """Sampled check of ``F(x, lambda) in F_eps(x, 0)``.

    Probes are visited in order of increasing ``|lambda|``; the first one
    with a violating sample stops the search and becomes the witness, and
    ``delta`` is its ``|lambda|``.  With no violation ``delta`` is the
    largest probed ``|lambda|``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    X = np.atleast_2d(np.asarray(x_samples, dtype=float))
    if X.shape[1] != fam.dims:
        X = X.reshape(-1, fam.dims)
    alo, ahi = delta_inflate_many(fam, X, 0.0, eps)
    probes = sorted({float(l) for l in lam_probe if l != 0.0}, key=lambda l: (abs(l), l))
    for lam in probes:
        lo, hi = eval_points(fam, X, lam)
        bad = np.any((lo < alo) | (hi > ahi), axis=1)
        if bad.any():
            i = int(np.argmax(np.max(np.maximum(alo - lo, hi - ahi), axis=1)))
            return PertAppxResult(
                delta=abs(lam),
                witness=(tuple(X[i].tolist()), lam, tuple(lo[i].tolist()), tuple(hi[i].tolist())),
                allowed=(tuple(alo[i].tolist()), tuple(ahi[i].tolist())),
                probes=tuple(probes),
            )
    return PertAppxResult(delta=max((abs(l) for l in probes), default=0.0), probes=tuple(probes))


def verify_eps_solution(traj: Trajectory, fam: FilippovFamily, eps: float) -> bool:
    """True iff every selected velocity lies in ``F_eps(x_k, 0)``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    n = min(len(traj.x), len(traj.v))
    lo, hi = delta_inflate_many(fam, traj.x[:n], 0.0, eps)
    V = traj.v[:n]
    return bool(np.all((lo <= V) & (V <= hi)))


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_sweep_csv(report: RobustnessReport, out=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in report.rows:
        w.writerow([_fmt(r.lam), r.verdict, r.inv_cell_count, _fmt(r.min_boundary_distance), r.grid_cells, _fmt(r.h_tau)])
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text
