"""Forward Euler integration of differential inclusions by velocity selection.

Each step picks a velocity ``v_k`` from the enclosure of ``F(x_k, lambda)``
and sets ``x_{k+1} = x_k + h v_k``.  Because ``|v_k| <= M`` the piecewise
linear interpolant stays within ``M h`` of ``x_k`` on each step, so ``v_k``
lies in ``F(B_{Mh}(x(t)))`` and the interpolant is a delta-solution with
``delta = M h``.  That radius is recorded as ``delta_cert``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .field import SWITCH_TOL, FilippovFamily, active_pieces, bound, eval_points, eval_value
from .geometry import Box, Interval

__all__ = [
    "SELECTIONS",
    "Trajectory",
    "ConvergenceRow",
    "select_velocity",
    "integrate",
    "integrate_batch",
    "lipschitz_check",
    "convergence_study",
    "write_trajectory_csv",
]

SELECTIONS = ("extremal-min", "extremal-max", "zero-if-available", "sliding", "seeded-random")

_FD_STEP = 1e-6


@dataclass(frozen=True)
class Trajectory:
    lam: float
    h: float
    t: np.ndarray  # (K+1,)
    x: np.ndarray  # (K+1, n)
    v: np.ndarray  # (K+1, n); v[k] is the velocity selected at x[k]
    delta_cert: float
    M: float
    selection: str
    exit_step: int | None = None  # the step whose successor left the window

    @property
    def exited(self) -> bool:
        return self.exit_step is not None

    def position(self, t: float) -> np.ndarray:
        """Piecewise-linear interpolant at time ``t``."""
        k = int(np.clip(np.searchsorted(self.t, t, side="right") - 1, 0, len(self.t) - 1))
        return self.x[k] + (t - self.t[k]) * self.v[k]


@dataclass(frozen=True)
class ConvergenceRow:
    h: float
    final: tuple[float, ...]
    sup_dist: float | None  # vs the previous (coarser) run
    dist_ratio: float | None
    error: float | None  # vs the closed form, if one was supplied
    error_ratio: float | None


def _sliding(fam: FilippovFamily, x: np.ndarray, lam: float, lo, hi) -> np.ndarray:
    pieces = active_pieces(fam, x, lam)
    if len(pieces) == 1:
        return pieces[0][1]
    xs = [x[d : d + 1] for d in range(fam.dims)]
    # first switching expression that vanishes here, with pieces on each side
    for piece, _ in pieces:
        for g in piece.guards:
            h = float(np.asarray(g.expr.evaluate(xs, lam)).reshape(-1)[0])
            if abs(h) > SWITCH_TOL:
                continue
            pos = [v for p, v in pieces if any(q.expr == g.expr and q.sign == ">" for q in p.guards)]
            neg = [v for p, v in pieces if any(q.expr == g.expr and q.sign == "<" for q in p.guards)]
            if not pos or not neg:
                continue
            grad = np.empty(fam.dims)
            for d in range(fam.dims):
                up = [xi.copy() for xi in xs]
                dn = [xi.copy() for xi in xs]
                up[d] = up[d] + _FD_STEP
                dn[d] = dn[d] - _FD_STEP
                hu = np.asarray(g.expr.evaluate(up, lam)).reshape(-1)[0]
                hd = np.asarray(g.expr.evaluate(dn, lam)).reshape(-1)[0]
                grad[d] = (hu - hd) / (2 * _FD_STEP)
            fp, fn = pos[0], neg[0]
            a, b = float(grad @ fp), float(grad @ fn)
            if a <= 0.0 <= b and a < b:
                alpha = min(1.0, max(0.0, b / (b - a)))
                return alpha * fp + (1.0 - alpha) * fn
            # crossing: follow the side the flow enters
            return fn if (a < 0 and b < 0) else fp
    return pieces[0][1]


def select_velocity(
    fam: FilippovFamily,
    x,
    lam: float,
    selection: str,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """A velocity inside the enclosure of ``F(x, lam)`` chosen by ``selection``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    enc = eval_value(fam, x, lam)
    lo, hi = enc.lo, enc.hi
    if selection == "extremal-min":
        v = lo.copy()
    elif selection == "extremal-max":
        v = hi.copy()
    elif selection == "zero-if-available":
        v = np.clip(0.0, lo, hi)
    elif selection == "sliding":
        v = _sliding(fam, x, lam, lo, hi)
    elif selection == "seeded-random":
        if rng is None:
            raise ValueError("seeded-random selection needs a generator")
        v = lo + rng.random(fam.dims) * (hi - lo)
    else:
        raise ValueError(f"unknown selection {selection!r}; choose from {', '.join(SELECTIONS)}")
    # rounding in convex combinations must not push v outside the enclosure
    return np.clip(np.asarray(v, dtype=float), lo, hi)


def integrate(
    fam: FilippovFamily,
    x0,
    lam: float,
    T: float,
    h: float,
    selection: str,
    window: Box,
    seed: int | None = 0,
    M: float | None = None,
) -> Trajectory:
    """Euler delta-solution on ``[0, T]``; stops early once a step leaves ``window``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.shape != (fam.dims,):
        raise ValueError(f"x0 must have {fam.dims} coordinate(s)")
    if not (h > 0 and T > 0) or not (math.isfinite(h) and math.isfinite(T)):
        raise ValueError("step h and horizon T must be positive and finite")
    if h > T:
        raise ValueError(f"step h={h} exceeds horizon T={T}")
    if not window.contains_point(x0):
        raise ValueError(f"x0={x0.tolist()} lies outside the window {window!r}")
    fam.check_lambda(lam)
    if M is None:
        M = bound(fam, window, Interval.point(lam))
    if selection not in SELECTIONS:
        raise ValueError(f"unknown selection {selection!r}; choose from {', '.join(SELECTIONS)}")
    rng = np.random.default_rng(seed)

    ratio = T / h
    K = int(round(ratio)) if abs(ratio - round(ratio)) < 1e-9 * max(1.0, ratio) else int(math.ceil(ratio))
    xs = [x0]
    vs = []
    exit_step = None
    for k in range(K):
        v = select_velocity(fam, xs[-1], lam, selection, rng)
        vs.append(v)
        nxt = xs[-1] + h * v
        if not window.contains_point(nxt):
            exit_step = k
            break
        xs.append(nxt)
    if exit_step is None:
        vs.append(select_velocity(fam, xs[-1], lam, selection, rng))
    x = np.array(xs)
    return Trajectory(
        lam=float(lam),
        h=float(h),
        t=np.arange(len(xs)) * float(h),
        x=x,
        v=np.array(vs),
        delta_cert=float(M) * float(h),
        M=float(M),
        selection=selection,
        exit_step=exit_step,
    )


def integrate_batch(
    fam: FilippovFamily,
    X0,
    lam: float,
    T: float,
    h: float,
    selection: str,
    window: Box,
    seed: int | None = 0,
):
    """Endpoints of many Euler delta-solutions at once.

    Returns ``(X, alive)`` where ``alive[i]`` is False once trajectory ``i``
    has left the window (its row then holds the last retained point).
    ``sliding`` falls back to the per-point rule only at set-valued points.
    """
    X = np.array(np.atleast_2d(np.asarray(X0, dtype=float)))
    if X.shape[1] != fam.dims:
        raise ValueError(f"points must have {fam.dims} coordinate(s)")
    if not (h > 0 and T > 0) or h > T:
        raise ValueError("need 0 < h <= T")
    if selection not in SELECTIONS:
        raise ValueError(f"unknown selection {selection!r}; choose from {', '.join(SELECTIONS)}")
    rng = np.random.default_rng(seed)
    ratio = T / h
    K = int(round(ratio)) if abs(ratio - round(ratio)) < 1e-9 * max(1.0, ratio) else int(math.ceil(ratio))
    alive = np.array([window.contains_point(x) for x in X], dtype=bool)
    wlo, whi = window.lo, window.hi
    for _ in range(K):
        lo, hi = eval_points(fam, X, lam)
        if selection == "extremal-min":
            V = lo
        elif selection == "extremal-max":
            V = hi
        elif selection == "zero-if-available":
            V = np.clip(0.0, lo, hi)
        elif selection == "seeded-random":
            V = lo + rng.random(X.shape) * (hi - lo)
        else:
            V = lo.copy()
            for i in np.flatnonzero(alive & np.any(hi > lo, axis=1)):
                V[i] = _sliding(fam, X[i], lam, lo[i], hi[i])
        V = np.clip(V, lo, hi)
        nxt = X + h * V
        ok = alive & np.all((wlo <= nxt) & (nxt <= whi), axis=1)
        X = np.where(ok[:, None], nxt, X)
        alive = ok
    return X, alive


def lipschitz_check(traj: Trajectory, M: float, rows_per_chunk: int = 2048) -> bool:
    """``|x_i - x_j| <= (M + delta_cert) |t_i - t_j|`` for every pair of grid points."""
    L = float(M) + traj.delta_cert
    x, t = traj.x, traj.t
    # absorb the rounding of the Euler updates themselves
    tol = 1e-12 + 8 * np.finfo(float).eps * float(np.max(np.abs(x), initial=0.0))
    for start in range(0, len(t), rows_per_chunk):
        xi = x[start : start + rows_per_chunk, None, :]
        ti = t[start : start + rows_per_chunk, None]
        lhs = np.max(np.abs(xi - x[None, :, :]), axis=2)
        if np.any(lhs > L * np.abs(ti - t[None, :]) + tol):
            return False
    return True


def _sup_distance(coarse: Trajectory, fine: Trajectory) -> float:
    t_end = min(coarse.t[-1], fine.t[-1])
    ts = coarse.t[coarse.t <= t_end + 1e-12]
    cols = [np.interp(ts, fine.t, fine.x[:, d]) for d in range(fine.x.shape[1])]
    return float(np.max(np.abs(np.stack(cols, 1) - coarse.x[: len(ts)])))


def convergence_study(
    fam: FilippovFamily,
    x0,
    lam: float,
    T: float,
    h_schedule: Sequence[float],
    selection: str,
    window: Box,
    exact: Callable[[float], Sequence[float] | float] | None = None,
    seed: int = 0,
) -> list[ConvergenceRow]:
    """Final values, refinement distances and closed-form errors per step size."""
    hs = [float(h) for h in h_schedule]
    if any(b >= a for a, b in zip(hs, hs[1:])):
        raise ValueError("h_schedule must be strictly decreasing")
    M = bound(fam, window, Interval.point(lam))
    rows: list[ConvergenceRow] = []
    prev = None
    for h in hs:
        traj = integrate(fam, x0, lam, T, h, selection, window, seed=seed, M=M)
        dist = ratio = err = eratio = None
        if prev is not None:
            dist = _sup_distance(prev, traj)
            last = rows[-1].sup_dist
            ratio = dist / last if last else None
        if exact is not None:
            err = float(np.max(np.abs(traj.x[-1] - np.atleast_1d(exact(traj.t[-1])))))
            if rows and rows[-1].error:
                eratio = err / rows[-1].error
        rows.append(ConvergenceRow(h, tuple(traj.x[-1].tolist()), dist, ratio, err, eratio))
        prev = traj
    return rows


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory_csv(traj: Trajectory, out=None) -> str:
    """CSV ``t,x1..xn,v1..vn,lambda,delta_cert``; written to ``out`` if given."""
    n = traj.x.shape[1]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", *[f"x{i + 1}" for i in range(n)], *[f"v{i + 1}" for i in range(n)], "lambda", "delta_cert"])
    for k in range(len(traj.t)):
        w.writerow(
            [_fmt(traj.t[k]), *map(_fmt, traj.x[k]), *map(_fmt, traj.v[k]), _fmt(traj.lam), _fmt(traj.delta_cert)]
        )
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    return text
