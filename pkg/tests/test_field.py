import numpy as np
import pytest

from filicon.field import (
    DomainError,
    SearchParams,
    bound,
    delta_inflate,
    eval_box,
    eval_value,
    usc_falsify,
)
from filicon.geometry import Box, Interval, contains, hull
from filicon.systems import builtin

from conftest import g_one_oracle

WIN = Box.parse([(-1, 1)])


def enc(e):
    return (float(e.lo[0]), float(e.hi[0]))


def test_convexify_examples(fams):
    A = fams["systemA"]
    assert enc(eval_value(A, [0.0], 0.0)) == (1.0, 3.0)
    assert enc(eval_value(A, [-1.0], 0.0)) == (1.0, 1.0)
    assert enc(eval_value(A, [0.5], 0.0)) == (3.0, 3.0)
    P = fams["planarDemo"]
    v = eval_value(P, [0.3, 0.2], 0.0)
    assert v.lo.tolist() == v.hi.tolist() == [-0.3, -1.0]
    v = eval_value(P, [0.3, -0.2], 0.5)
    assert v.lo.tolist() == v.hi.tolist() == [-0.3, 1.0]


def test_system_b_values(fams):
    B = fams["systemB"]
    lo, hi = enc(eval_value(B, [0.0], 0.0))
    tau = g_one_oracle(np.linspace(-1, 1, 1_000_001)).min()
    assert lo == pytest.approx(tau, abs=1e-6) and lo < 0 and hi == 3.0
    for lam in (1.0, 0.5, 0.1, 1e-3):
        assert enc(eval_value(B, [0.0], lam)) == (0.0, 0.0)


def test_system_c_switch_value(fams):
    assert enc(eval_value(fams["systemC"], [0.0], 0.3)) == (0.0, 1.0)


def test_eval_value_errors(fams):
    with pytest.raises(DomainError):
        eval_value(fams["systemA"], [0.0], 1.5)
    with pytest.raises(DomainError):
        eval_value(fams["systemA"], [np.nan], 0.0)
    with pytest.raises(DomainError):
        eval_value(fams["systemA"], [0.0, 1.0], 0.0)


def test_eval_box_examples(fams):
    lo, hi = enc(eval_box(fams["systemA"], Box.parse([(-0.1, 0.1)]), 0.0))
    assert lo <= 1.0 and hi >= 3.0
    assert enc(eval_box(fams["systemA"], Box.parse([(0.2, 0.4)]), 0.0)) == (3.0, 3.0)
    lo, hi = enc(eval_box(fams["systemC"], Box.parse([(-0.5, -0.25)]), 0.7))
    assert lo == pytest.approx(0.25) and hi == pytest.approx(0.5)
    assert lo <= 0.25 and hi >= 0.5


def _sampled_hull(fam, x_lo, x_hi, lam, n=2001):
    xs = np.unique(np.concatenate([np.linspace(x_lo, x_hi, n), [0.0] if x_lo <= 0 <= x_hi else []]))
    vals = [eval_value(fam, [x], lam) for x in xs]
    return enc(hull(vals))


def test_delta_inflate_examples(fams):
    # oracle: dense sampling of F over the ball, then inflate
    h = _sampled_hull(fams["systemA"], -0.1, 0.1, 0.0)
    assert h == (1.0, 3.0)
    lo, hi = enc(delta_inflate(fams["systemA"], [0.0], 0.0, 0.1))
    assert (lo, hi) == pytest.approx((h[0] - 0.1, h[1] + 0.1))
    assert lo <= 0.9 and hi >= 3.1
    h = _sampled_hull(fams["systemC"], -0.2, 0.2, 0.0)
    assert h == (0.0, 1.0)
    lo, hi = enc(delta_inflate(fams["systemC"], [0.0], 0.0, 0.2))
    assert (lo, hi) == pytest.approx((-0.2, 1.2))
    # delta = 0 at a non-switching point is the plain value
    assert enc(delta_inflate(fams["systemA"], [0.4], 0.0, 0.0)) == enc(eval_value(fams["systemA"], [0.4], 0.0))


def test_delta_inflate_rejects_negative(fams):
    with pytest.raises(ValueError):
        delta_inflate(fams["systemA"], [0.0], 0.0, -1.0)


def _dense_max(fam_name):
    x = np.linspace(-1, 1, 4001)
    lam = np.linspace(1e-3, 1, 400)
    X, L = np.meshgrid(x, lam)
    if fam_name == "systemA":
        return max(np.abs(np.tanh(X / L) + 2).max(), 3.0)
    if fam_name == "systemB":
        return max(np.abs(g_one_oracle(X / L)).max(), 3.0)
    return np.abs(np.where(x < 0, -x, 1.0)).max()


@pytest.mark.parametrize("name,expected", [("systemA", 3.0), ("systemB", 3.0), ("systemC", 1.0)])
def test_bound_examples(fams, name, expected):
    M = bound(fams[name], WIN)
    oracle = _dense_max(name)
    assert oracle == pytest.approx(expected, abs=1e-6)
    assert M >= oracle
    assert M == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("name", ["systemA", "systemB", "familyH", "systemC", "planarDemo"])
def test_eval_box_soundness(fams, name):
    fam = fams[name]
    spec = builtin(name)
    rng = np.random.default_rng(7)
    for _ in range(12):
        lo = spec.window.lo + rng.random(spec.dims) * spec.window.widths * 0.9
        hi = np.minimum(lo + rng.random(spec.dims) * 0.3, spec.window.hi)
        lam = float(rng.choice([0.0, 0.01, 0.2, 1.0]))
        box = Box.from_bounds(lo, hi)
        e = eval_box(fam, box, lam)
        X = lo + rng.random((1000, spec.dims)) * (hi - lo)
        for x in X:
            v = eval_value(fam, x, lam)
            assert contains(e.box, v.box)


@pytest.mark.parametrize("name", ["systemA", "systemB", "systemC"])
def test_delta_inflate_monotone(fams, name):
    fam = fams[name]
    for x in (-0.5, -0.01, 0.0, 0.02, 0.7):
        prev = None
        for d in (0.0, 0.01, 0.05, 0.2, 0.5):
            cur = delta_inflate(fam, [x], 0.0, d)
            if prev is not None:
                assert contains(cur.box, prev.box)
            prev = cur


@pytest.mark.parametrize("name", ["systemA", "systemB", "familyH", "systemC", "planarDemo"])
def test_bound_dominates_samples(fams, name):
    fam = fams[name]
    spec = builtin(name)
    M = bound(fam, spec.window)
    rng = np.random.default_rng(3)
    X = spec.window.lo + rng.random((10_000, spec.dims)) * spec.window.widths
    lams = rng.choice([0.0, 1e-3, 0.1, 0.5, 1.0], size=10_000)
    from filicon.field import eval_points

    for lam in np.unique(lams):
        lo, hi = eval_points(fam, X[lams == lam], float(lam))
        assert np.all(np.maximum(np.abs(lo), np.abs(hi)) <= M)


@pytest.mark.parametrize("eps", [0.5, 0.2, 0.1])
def test_pertappx_containment_system_a(fams, eps):
    # search a delta with F(x, lam) inside F_eps(x, 0) for every sampled |lam| < delta
    fam = fams["systemA"]
    xs = np.linspace(-1, 1, 801)
    allowed = [delta_inflate(fam, [x], 0.0, eps) for x in xs]
    found = None
    for delta in (0.5, 0.2, 0.1, 0.05, 0.02, 0.01, 0.005):
        lams = np.linspace(0, delta, 25)[:-1]
        if all(contains(a.box, eval_value(fam, [x], float(l)).box) for l in lams for x, a in zip(xs, allowed)):
            found = delta
            break
    assert found is not None and found > 0


def test_usc_falsifier(fams):
    tau = g_one_oracle(np.linspace(-1, 1, 1_000_001)).min()
    search = SearchParams(window=WIN)
    w = usc_falsify(fams["familyH"], 0.0, 0.5, search)
    assert w is not None
    assert abs(w.base_x[0]) <= 0.05 and w.base_lam == 0.0
    # distance from tau to [1 - 0.5, 3 + 0.5]
    assert w.separation == pytest.approx(0.5 - tau, abs=0.01)
    assert w.separation > 0
    assert abs(w.probe_x[0] - w.base_x[0]) <= w.radius and abs(w.probe_lam) <= w.radius
    assert usc_falsify(fams["systemA"], 0.0, 0.5, search) is None
    assert usc_falsify(fams["systemB"], 0.0, 0.5, search) is None
    w = usc_falsify(fams["familyH"], 0.0, 0.1, search)
    assert w.separation >= 0.9


def test_usc_falsifier_rejects_bad_eps(fams):
    with pytest.raises(ValueError):
        usc_falsify(fams["systemA"], 0.0, 0.0, SearchParams(window=WIN))


def test_lambda_interval_evaluation_includes_zero_member(fams):
    from filicon.field import eval_boxes

    lo, hi = eval_boxes(fams["systemB"], [[-0.01]], [[0.01]], Interval(0.0, 0.1))
    tau = g_one_oracle(np.linspace(-1, 1, 100_001)).min()
    assert lo[0, 0] <= tau and hi[0, 0] >= 3.0 - 1e-9
