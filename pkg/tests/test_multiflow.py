import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from filicon.field import bound
from filicon.geometry import Box, Interval
from filicon.multiflow import (
    CellSet,
    Grid,
    auto_htau,
    build_outer_approx,
    check_monoid,
    image,
    transpose,
    write_edges,
)
from filicon.solver import SELECTIONS, integrate, integrate_batch
from filicon.systems import builtin

from conftest import g_one_oracle

WIN1 = Box.parse([(-1, 1)])
G512 = Grid(WIN1, 512)


# -- exact solution oracles (independent of the field module) ------------------


def _smooth_flow(rhs, X0, t):
    sol = solve_ivp(lambda _, y: rhs(y), (0.0, t), X0, rtol=1e-11, atol=1e-13, method="DOP853")
    return sol.y[:, -1]


def exact_endpoints(name, lam, X0, t, rng):
    """Endpoints at time ``t`` of exact solutions from the points ``X0`` (1-D or planar)."""
    x = X0[:, 0]
    if name == "planarDemo":
        x1 = x * math.exp(-t)
        x2 = X0[:, 1]
        x2 = np.where(np.abs(x2) >= t, x2 - np.sign(x2) * t, 0.0)
        return np.stack([x1, x2], 1)
    if name == "systemC":
        dwell = rng.random(len(x)) * t
        out = np.where(x < 0, x * math.exp(-t), x + t)
        return np.where(x == 0, t - dwell, out)[:, None]
    if lam > 0 and name in ("systemA", "systemB", "familyH"):
        if name == "systemA":
            rhs = lambda y: np.tanh(y / lam) + 2
        else:
            rhs = lambda y: g_one_oracle(y / lam)
        return _smooth_flow(rhs, x, t)[:, None]
    # lambda = 0 members: speed 1 on the left, 3 on the right
    reach = x + t  # still left of the switch
    after = t - np.maximum(-x, 0.0)  # time left once the switch is reached
    if name == "systemB":
        # 0 is in G_0(0): a solution may rest at the switch for any time
        after = after * rng.random(len(x))
    out = np.where(x > 0, x + 3 * t, np.where(reach < 0, reach, 3 * after))
    return out[:, None]


def _htau(name, fam, lam, grid):
    h = builtin(name).htau
    return h if h is not None else auto_htau(fam, lam, grid)


@pytest.mark.parametrize("name", ["systemA", "systemB", "familyH", "systemC", "planarDemo"])
@pytest.mark.parametrize("lam", [0.0, 0.1, 1.0])
def test_soundness_against_exact_solutions(fams, name, lam):
    fam = fams[name]
    spec = builtin(name)
    grid = Grid(spec.window, 512 if spec.dims == 1 else 32)
    h = _htau(name, fam, lam, grid)
    mf = build_outer_approx(fam, lam, grid, h)
    rng = np.random.default_rng(17)
    cells = rng.integers(0, grid.n_cells, 1000)
    LO, HI = grid.cell_bounds(cells)
    X0 = LO + rng.random(LO.shape) * (HI - LO)
    if spec.dims == 1:
        X0[:20, 0] = 0.0  # switching point itself
        cells[:20] = grid.locate(X0[:20])
    X = exact_endpoints(name, lam, X0, h, rng)
    # 1-D flows are monotone and the planar one is a contraction, so the
    # endpoint being in the window means the whole arc was
    inside = np.all((spec.window.lo <= X) & (X <= spec.window.hi), axis=1)
    assert inside.sum() > 100
    violations = []
    for c, x in zip(cells[inside], X[inside]):
        succ = mf.successors(int(c))
        # the ODE oracle is accurate to ~1e-9; accept either side of a face
        cand = {int(grid.locate(x + s)[0]) for s in (-1e-9, 0.0, 1e-9)} - {-1}
        if not any(k in succ for k in cand):
            violations.append((int(c), x.tolist()))
    assert violations == []


@pytest.mark.parametrize("name", ["systemB", "systemC", "planarDemo"])
def test_soundness_against_euler_delta_solutions(fams, name):
    fam = fams[name]
    spec = builtin(name)
    grid = Grid(spec.window, 256 if spec.dims == 1 else 32)
    lam = 0.0
    h = _htau(name, fam, lam, grid)
    hs = h / 32
    M = bound(fam, spec.window, Interval.point(lam))
    mf = build_outer_approx(fam, lam, grid, h, delta=M * hs * 1.0001)
    rng = np.random.default_rng(4)
    cells = rng.integers(0, grid.n_cells, 1000)
    LO, HI = grid.cell_bounds(cells)
    X0 = LO + rng.random(LO.shape) * (HI - LO)
    sel = rng.integers(0, len(SELECTIONS), 1000)
    bad = 0
    for s, sname in enumerate(SELECTIONS):
        pick = np.flatnonzero(sel == s)
        X, alive = integrate_batch(fam, X0[pick], lam, h, hs, sname, spec.window, seed=s)
        hit = grid.locate(X)
        for j in np.flatnonzero(alive):
            bad += hit[j] not in mf.successors(int(cells[pick[j]]))
    assert bad == 0


def test_identity_at_zero_horizon(fams):
    for name in ("systemA", "systemC"):
        mf = build_outer_approx(fams[name], 0.0, G512, 0.0)
        for i in (0, 17, 256, 511):
            assert mf.successors(i).indices().tolist() == [i]
        assert mf.n_edges == 512
        assert transpose(mf).adj.nnz == 512
        assert (transpose(mf).adj != mf.adj).nnz == 0


def test_system_c_switch_cell_image(fams):
    mf = build_outer_approx(fams["systemC"], 0.0, G512, 0.1)
    c0 = int(G512.locate([0.0])[0])
    succ = mf.successors(c0)
    # cells whose interior meets [0, 0.1]
    need = range(c0, int(G512.locate([0.1])[0]) + 1)
    assert all(k in succ for k in need)


def test_system_a_rightward_image(fams):
    fam = fams["systemA"]
    w = G512.widths[0]
    c = int(G512.locate([0.25])[0])
    lo, hi = G512.cell_bounds([c])
    assert lo[0, 0] == 0.25
    mf = build_outer_approx(fam, 0.0, G512, 0.05)
    succ = mf.successors(c)
    LO, HI = G512.cell_bounds(succ.indices())
    assert LO.min() >= 0.25 + 0.15 - 2 * w - 1e-12
    assert HI.max() <= hi[0, 0] + 0.15 + 2 * w + 1e-12
    rng = np.random.default_rng(0)
    X0 = lo[0, 0] + rng.random(1000) * w
    for sel in ("extremal-min", "extremal-max"):
        X, alive = integrate_batch(fam, X0[:, None], 0.0, 0.05, 0.05 / 64, sel, WIN1)
        assert alive.all()
        assert all(k in succ for k in G512.locate(X))


def test_image_basics(fams):
    mf = build_outer_approx(fams["systemA"], 0.0, G512, 0.05)
    empty = CellSet.empty(512)
    assert not image(mf, empty, 7)
    A = CellSet.from_indices(512, [3, 40])
    assert image(mf, A, 0) == A
    start = CellSet.from_indices(512, G512.locate([-0.9]))
    assert not image(mf, start, math.ceil(2 / 0.05) + 1)
    with pytest.raises(ValueError):
        image(mf, A, -1)


def test_image_contains_sampled_endpoints(fams):
    fam = fams["systemB"]
    mf = build_outer_approx(fam, 0.2, G512, 0.1)
    A = G512.cells_in_box(Box.parse([(-0.3, 0.2)]))
    img = image(mf, A, 1)
    rng = np.random.default_rng(1)
    X0 = -0.3 + rng.random(1000) * 0.5
    X = exact_endpoints("systemB", 0.2, X0[:, None], 0.1, rng)
    assert all(int(G512.locate(x)[0]) in img for x in X)


def test_transpose(fams):
    mf = build_outer_approx(fams["systemB"], 0.3, G512, 0.1)
    d = transpose(mf)
    assert d.dual and not mf.dual
    assert transpose(d) == mf
    rng = np.random.default_rng(2)
    for a, b in rng.integers(0, 512, (2000, 2)):
        assert (b in mf.successors(a)) == (a in d.successors(b))
    assert (d.adj != mf.adj.T).nnz == 0


def test_dual_flows_leftward(fams):
    mf = build_outer_approx(fams["systemA"], 0.0, G512, 0.05)
    d = transpose(mf)
    c = int(G512.locate([0.9])[0])
    pre = d.successors(c)
    LO, HI = G512.cell_bounds(pre.indices())
    assert HI.max() < 0.9
    # exact backward solution: speed 3 to the right of the switch
    assert int(G512.locate([0.9 - 3 * 0.05])[0]) in pre


def test_monoid_system_a(fams):
    fam = fams["systemA"]
    h = 0.05
    M = bound(fam, WIN1, Interval.point(0.0))
    delta = M * h / 8 * 1.0001
    mf = build_outer_approx(fam, 0.0, G512, h, delta=delta)
    mf2 = build_outer_approx(fam, 0.0, G512, 2 * h, delta=delta)
    rep = check_monoid(mf, 1000, fam, mf2)
    assert rep.identity_ok and rep.ok
    assert rep.kept > 100


def test_monoid_system_b(fams):
    fam = fams["systemB"]
    h = 0.1
    M = bound(fam, WIN1, Interval.point(0.2))
    delta = M * h / 8 * 1.0001
    mf = build_outer_approx(fam, 0.2, G512, h, delta=delta)
    mf2 = build_outer_approx(fam, 0.2, G512, 2 * h, delta=delta)
    rep = check_monoid(mf, 1000, fam, mf2, seed=3)
    assert rep.ok and rep.kept > 100


def test_refinement_monotone(fams):
    fam = fams["systemB"]
    coarse = Grid(WIN1, 128)
    fine = coarse.refine(2)
    mc = build_outer_approx(fam, 0.5, coarse, 0.1)
    mfine = build_outer_approx(fam, 0.5, fine, 0.1)
    w = coarse.widths[0]
    for c in range(coarse.n_cells):
        sc = mc.successors(c).indices()
        sf = np.concatenate([mfine.successors(k).indices() for k in (2 * c, 2 * c + 1)])
        if sf.size == 0:
            continue
        assert sc.size > 0
        lo_c, hi_c = coarse.cell_bounds(sc)
        lo_f, hi_f = fine.cell_bounds(sf)
        assert lo_f.min() >= lo_c.min() - w - 1e-12
        assert hi_f.max() <= hi_c.max() + w + 1e-12


def test_degenerate_grid():
    with pytest.raises(ValueError):
        Grid(WIN1, 0)
    with pytest.raises(ValueError):
        Grid(Box.parse([(0, 0)]), 4)


def test_negative_horizon_rejected(fams):
    with pytest.raises(ValueError):
        build_outer_approx(fams["systemA"], 0.0, G512, -0.1)


def test_locate_tiles_the_window():
    g = Grid(Box.parse([(-1, 1), (0, 3)]), (4, 6))
    assert g.locate([[-1, 0]]).tolist() == [0]
    assert g.locate([[1, 3]]).tolist() == [g.n_cells - 1]
    assert g.locate([[1.5, 0]]).tolist() == [-1]
    for i in range(g.n_cells):
        box = g.cell_box(i)
        assert g.locate(box.center[None, :])[0] == i


def test_write_edges(fams, tmp_path):
    g = Grid(WIN1, 16)
    mf = build_outer_approx(fams["systemC"], 0.0, g, 0.5)
    path = tmp_path / "edges.txt"
    write_edges(mf, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# window=-1,1 subdivisions=16 h_tau=0.5 lambda=0 M=")
    assert lines[0].endswith(" dual=0")
    # M bounds the field on the reach-inflated window, so it is at least 1
    assert float(lines[0].split("M=")[1].split()[0]) == mf.M >= 1.0
    edges = [tuple(map(int, l.split())) for l in lines[1:]]
    assert len(edges) == mf.n_edges
    assert all(b in mf.successors(a) for a, b in edges)
