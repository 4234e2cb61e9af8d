"""Command-line driver: ``filicon {validate,simulate,isolate,sweep,omega}``.

Reports go to stdout as ``key=value`` lines or CSV; ``--out DIR`` also
writes them to files and ``--plot`` adds PNG figures next to them.

Exit codes: 0 success, 1 usage/input error, 2 (validate only) a
semicontinuity witness was found.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .conley import cell_hull, check_isolation, omega_limit, report_lines, write_cellset
from .expr import ParseError
from .field import DomainError, SearchParams, eval_points, usc_falsify
from .geometry import Box, Interval
from .multiflow import CellSet, Grid, auto_htau, build_outer_approx, image, write_edges
from .perturb import isolation_sweep, write_sweep_csv
from .solver import SELECTIONS, integrate, write_trajectory_csv
from .systems import SpecError, SystemSpec, resolve_system

EXIT_OK, EXIT_ERROR, EXIT_WITNESS = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _fmt_vec(v) -> str:
    return ",".join(_fmt(a) for a in np.atleast_1d(v))


# -- flag parsing ------------------------------------------------------------------


def parse_lambdas(text: str) -> list[float]:
    """``a,b,c`` or an inclusive range ``start:stop:step``."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"lambda range must be start:stop:step, got {text!r}")
        a, b, s = (float(p) for p in parts)
        if s <= 0 or b < a:
            raise UsageError(f"bad lambda range {text!r}")
        n = int(round((b - a) / s))
        return [round(a + k * s, 12) for k in range(n + 1) if a + k * s <= b + 1e-12]
    try:
        return [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise UsageError(f"cannot parse lambda list {text!r}") from None


def parse_box(text: str, dims: int) -> Box:
    """Axes separated by ``;``, each ``lo,hi``, optionally bracketed: ``[-1,1];[-1,1]``."""
    axes = [a for a in text.replace("[", "").replace("]", "").split(";") if a.strip()]
    if len(axes) != dims:
        raise UsageError(f"box needs {dims} axis interval(s), got {text!r}")
    try:
        ivs = []
        for a in axes:
            lo, hi = (float(p) for p in a.split(","))
            ivs.append(Interval(lo, hi))
    except ValueError:
        raise UsageError(f"cannot parse box {text!r}") from None
    return Box(tuple(ivs))


def parse_point(text: str, dims: int) -> np.ndarray:
    try:
        x = np.array([float(p) for p in text.replace("[", "").replace("]", "").split(",")])
    except ValueError:
        raise UsageError(f"cannot parse point {text!r}") from None
    if x.shape != (dims,):
        raise UsageError(f"point needs {dims} coordinate(s), got {text!r}")
    return x


def _single_lambda(args, spec: SystemSpec) -> float:
    if args.lam is None:
        return 0.0 if 0.0 in spec.lam_range else spec.lam_range.lo
    lams = parse_lambdas(args.lam)
    if len(lams) != 1:
        raise UsageError("this command takes a single --lambda value")
    return lams[0]


def _check_lambda(spec: SystemSpec, lams) -> None:
    for lam in lams:
        if lam not in spec.lam_range:
            raise UsageError(f"lambda={lam} outside the declared range {spec.lam_range!r}")


def _grid(args, spec: SystemSpec) -> Grid:
    k = args.grid if args.grid is not None else (512 if spec.dims == 1 else 64)
    if k < 1:
        raise UsageError("--grid must be positive")
    return Grid(spec.window, k)


def _neighborhood(args, spec: SystemSpec) -> Box:
    if args.nbox is None:
        return spec.neighborhood
    N = parse_box(args.nbox, spec.dims)
    if N.intersect(spec.window) != N:
        raise UsageError("--nbox must lie inside the window")
    return N


def _htau(args, spec: SystemSpec, fam, lam, grid) -> float:
    if args.htau is not None:
        if not args.htau > 0:
            raise UsageError("--htau must be positive")
        return args.htau
    return spec.htau if spec.htau is not None else auto_htau(fam, lam, grid)


def _outdir(args) -> Path | None:
    if args.out is None:
        return None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(lines: list[str], out: Path | None, name: str) -> None:
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if out is not None:
        (out / name).write_text(text)


# -- commands ----------------------------------------------------------------------


def cmd_validate(args, spec: SystemSpec) -> int:
    fam = spec.family()
    eps = 0.1 if args.eps is None else args.eps
    if not eps > 0:
        raise UsageError("--eps must be positive")
    if args.lam is not None:
        lam0s = parse_lambdas(args.lam)
        _check_lambda(spec, lam0s)
    else:
        lam0s = [l for l in (0.0, 0.25, 0.5, 0.75, 1.0) if l in spec.lam_range] or [spec.lam_range.lo]
    # structural check: bounded, non-empty values on a sample grid
    axes = [np.linspace(iv.lo, iv.hi, 101 if spec.dims == 1 else 21) for iv in spec.window.intervals]
    X = np.stack([a.reshape(-1) for a in np.meshgrid(*axes, indexing="ij")], 1)
    for lam in lam0s:
        lo, hi = eval_points(fam, X, lam)
        if np.any(lo > hi) or not np.all(np.isfinite(lo) & np.isfinite(hi)):
            raise UsageError(f"field has empty or unbounded values at lambda={lam}")
    lines = [
        f"system={spec.name}",
        "structure=ok",
        f"eps={_fmt(eps)}",
        f"base_lambdas={_fmt_vec(lam0s)}",
    ]
    witness = None
    search = SearchParams(window=spec.window)
    for lam0 in lam0s:
        witness = usc_falsify(fam, lam0, eps, search)
        if witness is not None:
            break
    if witness is None:
        lines.append("witness=none")
        lines.append("note=no witness found at this search density; this is not a proof of semicontinuity")
    else:
        lines += [
            "witness=found",
            f"witness_base_x={_fmt_vec(witness.base_x)}",
            f"witness_base_lambda={_fmt(witness.base_lam)}",
            f"witness_probe_x={_fmt_vec(witness.probe_x)}",
            f"witness_probe_lambda={_fmt(witness.probe_lam)}",
            f"witness_separation={_fmt(witness.separation)}",
            f"witness_radius={_fmt(witness.radius)}",
        ]
    _emit(lines, _outdir(args), "validate.txt")
    return EXIT_WITNESS if witness is not None else EXIT_OK


def cmd_simulate(args, spec: SystemSpec) -> int:
    if args.x0 is None:
        raise UsageError("simulate needs --x0")
    fam = spec.family()
    lam = _single_lambda(args, spec)
    _check_lambda(spec, [lam])
    x0 = parse_point(args.x0, spec.dims)
    T = 1.0 if args.T is None else args.T
    h = 0.01 if args.step is None else args.step
    traj = integrate(fam, x0, lam, T, h, args.sel, spec.window, seed=args.seed)
    out = _outdir(args)
    text = write_trajectory_csv(traj, None if out is None else out / "trajectory.csv")
    sys.stdout.write(text)
    if out is not None and args.plot:
        from .plotting import plot_trajectory

        plot_trajectory(traj, out / "trajectory.png")
    return EXIT_OK


def cmd_isolate(args, spec: SystemSpec) -> int:
    fam = spec.family()
    lam = _single_lambda(args, spec)
    _check_lambda(spec, [lam])
    grid = _grid(args, spec)
    N = _neighborhood(args, spec)
    h = _htau(args, spec, fam, lam, grid)
    mf = build_outer_approx(fam, lam, grid, h)
    rep = check_isolation(mf, grid.cells_in_box(N))
    lines = [f"system={spec.name}", *report_lines(rep, grid)]
    out = _outdir(args)
    _emit(lines, out, "isolation_report.txt")
    if out is not None:
        write_cellset(rep.invariant, out / "invariant_cells.txt")
        write_cellset(rep.boundary, out / "boundary_cells.txt")
        write_edges(mf, out / "multiflow_edges.txt")
        if args.plot:
            from .plotting import plot_cells

            layers = {"neighborhood": rep.neighborhood, "boundary": rep.boundary, "invariant": rep.invariant}
            plot_cells(grid, layers, out / "isolation.png", f"{spec.name}: {rep.verdict}")
    return EXIT_OK


def cmd_sweep(args, spec: SystemSpec) -> int:
    fam = spec.family()
    if args.lam is None:
        lams = [l for l in parse_lambdas("-1:1:0.05") if l in spec.lam_range]
    else:
        lams = parse_lambdas(args.lam)
    _check_lambda(spec, lams)
    if 0.0 not in lams:
        raise UsageError("the lambda samples must include 0")
    grid = _grid(args, spec)
    N = _neighborhood(args, spec)
    htau = args.htau if args.htau is not None else spec.htau
    if htau is not None and not htau > 0:
        raise UsageError("--htau must be positive")
    budget = 3 if args.budget is None else args.budget
    rep = isolation_sweep(fam, spec.window, N, lams, grid.counts, htau, budget)
    out = _outdir(args)
    csv_text = write_sweep_csv(rep, None if out is None else out / "sweep.csv")
    sys.stdout.write(csv_text)
    summary = [
        f"system={spec.name}",
        f"samples={len(rep.rows)}",
        f"isolating={sum(r.verdict == 'Isolating' for r in rep.rows)}",
        f"lambda0_isolating={str(rep.zero_isolating).lower()}",
        f"eps_star={_fmt(rep.eps_star)}",
        f"neighborhood_touches_window={str(rep.clipped).lower()}",
    ]
    sys.stdout.write("\n".join(f"# {s}" for s in summary) + "\n")
    if out is not None:
        (out / "sweep_summary.txt").write_text("\n".join(summary) + "\n")
        if args.plot and spec.dims == 1:
            from .plotting import plot_sweep

            plot_sweep(rep, out / "sweep.png")
    return EXIT_OK


def cmd_omega(args, spec: SystemSpec) -> int:
    if args.x0 is None:
        raise UsageError("omega needs --x0")
    fam = spec.family()
    lam = _single_lambda(args, spec)
    _check_lambda(spec, [lam])
    grid = _grid(args, spec)
    x0 = parse_point(args.x0, spec.dims)
    if not spec.window.contains_point(x0):
        raise UsageError("--x0 lies outside the window")
    h = _htau(args, spec, fam, lam, grid)
    mf = build_outer_approx(fam, lam, grid, h)
    start = CellSet.from_indices(grid.n_cells, [int(grid.locate(x0[None, :])[0])])
    om = omega_limit(mf, start)
    hull = cell_hull(grid, om)
    lines = [
        f"system={spec.name}",
        f"lambda={_fmt(lam)}",
        f"h_tau={_fmt(h)}",
        f"grid={'x'.join(map(str, grid.counts))}",
        f"start_cell={start.indices()[0]}",
        f"omega_cells={len(om)}",
    ]
    if hull is not None:
        lines.append("omega_hull=" + ";".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(*hull)))
    lines += [str(i) for i in om.indices()]
    out = _outdir(args)
    _emit(lines, out, "omega_report.txt")
    if out is not None:
        write_cellset(om, out / "omega_cells.txt")
        if args.plot:
            from .plotting import plot_cells

            reach = image(mf, start, max(1, int(round(1.0 / h))))
            plot_cells(grid, {"start": start, "image after t~1": reach, "omega": om}, out / "omega.png", spec.name)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "isolate": cmd_isolate,
    "sweep": cmd_sweep,
    "omega": cmd_omega,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="filicon", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("source", nargs="?", metavar="SYSTEM", help="same as --system")
        p.add_argument("--system", help="built-in name or path to a YAML system file")
        p.add_argument("--grid", type=int, help="subdivisions per axis (default 512 in 1-D, 64 in 2-D)")
        p.add_argument("--htau", type=float, help="map horizon (default: system value, else automatic)")
        p.add_argument("--lambda", dest="lam", help="value, list a,b,c or range start:stop:step")
        p.add_argument("--nbox", help="neighborhood, e.g. '[-1,1]' or '[-1,1];[-0.5,0.5]'")
        p.add_argument("--eps", type=float, help="inflation radius for validate (default 0.1)")
        p.add_argument("--T", type=float, help="simulation horizon (default 1)")
        p.add_argument("--step", type=float, help="Euler step (default 0.01)")
        p.add_argument("--sel", choices=SELECTIONS, default="seeded-random", help="velocity selection")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--x0", help="initial point, comma separated")
        p.add_argument("--budget", type=int, help="refinement rounds per lambda in sweep (default 3)")
        p.add_argument("--out", help="directory for report files")
        p.add_argument("--plot", action="store_true", help="also write PNG figures to --out")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.source and args.system and args.source != args.system:
        parser.error("give the system once, either positionally or with --system")
    source = args.system or args.source
    if not source:
        parser.error("a system is required (positional or --system)")
    try:
        spec = resolve_system(source)
        if args.plot and args.out is None:
            raise UsageError("--plot needs --out")
        return COMMANDS[args.command](args, spec)
    except (UsageError, SpecError, ParseError, DomainError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"filicon {args.command}: error: {msg}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
