"""PNG figures for CLI runs (Agg backend, no timestamps in the files)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .multiflow import CellSet, Grid  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_META)
    plt.close(fig)


def plot_trajectory(traj, path) -> None:
    n = traj.x.shape[1]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if n == 2:
        ax.plot(traj.x[:, 0], traj.x[:, 1], lw=1)
        ax.plot(*traj.x[0], "o", ms=4)
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    else:
        for d in range(n):
            ax.plot(traj.t, traj.x[:, d], lw=1, label=f"x{d + 1}")
        ax.set_xlabel("t")
        ax.legend(loc="best")
    ax.set_title(f"{traj.selection}, lambda={traj.lam:g}, delta_cert={traj.delta_cert:.3g}")
    _save(fig, path)


def plot_cells(grid: Grid, layers: dict[str, CellSet], path, title: str = "") -> None:
    """Draw each named cell set; 1-D sets as bars, 2-D sets as masks."""
    fig, ax = plt.subplots(figsize=(6, 3.5 if grid.dims == 1 else 5))
    if grid.dims == 1:
        edges = grid.edges[0]
        for row, (name, cells) in enumerate(layers.items()):
            idx = cells.indices()
            ax.broken_barh([(edges[i], edges[i + 1] - edges[i]) for i in idx], (row - 0.4, 0.8))
        ax.set_yticks(range(len(layers)), list(layers))
        ax.set_xlim(edges[0], edges[-1])
        ax.set_xlabel("x1")
    elif grid.dims == 2:
        img = np.zeros(grid.n_cells)
        for k, cells in enumerate(layers.values(), start=1):
            img[cells.mask] = k
        lo, hi = grid.window.lo, grid.window.hi
        ax.imshow(img.reshape(grid.counts).T, origin="lower", extent=(lo[0], hi[0], lo[1], hi[1]), cmap="viridis")
        ax.set_xlabel("x1")
        ax.set_ylabel("x2")
    else:
        plt.close(fig)
        return
    ax.set_title(title)
    _save(fig, path)


def plot_sweep(report, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    lams = [r.lam for r in report.rows]
    for r in report.rows:
        color = "tab:green" if r.verdict == "Isolating" else "tab:red"
        if r.inv_hull is not None:
            ax.plot([r.lam, r.lam], [r.inv_hull[0][0], r.inv_hull[1][0]], color=color, lw=3)
        else:
            ax.plot([r.lam], [0.0], "x", color=color)
    ax.axhline(report.neighborhood.lo[0], color="grey", ls="--", lw=0.8)
    ax.axhline(report.neighborhood.hi[0], color="grey", ls="--", lw=0.8)
    ax.set_xlim(min(lams) - 0.05, max(lams) + 0.05)
    ax.set_xlabel("lambda")
    ax.set_ylabel("invariant part (x1 hull)")
    ax.set_title(f"eps* = {report.eps_star:g}")
    _save(fig, path)
