import numpy as np
import pytest
from hypothesis import given, strategies as st

from filicon.geometry import Box, Interval, ValueEnclosure, contains, distance, hull, inflate


def B(*pairs):
    return Box.parse(pairs)


def test_interval_invariants():
    assert Interval(1, 1).width == 0
    with pytest.raises(ValueError):
        Interval(2, 1)
    with pytest.raises(ValueError):
        Interval(float("nan"), 1)


def test_inflate_examples():
    b = inflate(B((1, 3)), 0.5)
    assert b.lo[0] <= 0.5 and b.hi[0] >= 3.5
    assert b.lo[0] == pytest.approx(0.5) and b.hi[0] == pytest.approx(3.5)
    assert inflate(B((1, 3)), 0) == B((1, 3))
    p = inflate(Box.point([0.0]), 0.1)
    assert p.lo[0] == pytest.approx(-0.1) and p.hi[0] == pytest.approx(0.1)


def test_inflate_rejects_negative():
    with pytest.raises(ValueError):
        inflate(B((0, 1)), -0.1)


def test_hull_examples():
    h = hull([ValueEnclosure.from_bounds([1], [1]), ValueEnclosure.from_bounds([3], [3])])
    assert h.box == B((1, 3))
    assert hull([ValueEnclosure.from_bounds([0], [1])]).box == B((0, 1))
    assert hull([B((0, 1)), B((2, 3))]).box == B((0, 3))
    assert hull([]).is_empty


def test_contains_and_distance_examples():
    assert contains(B((0, 4)), B((1, 3)))
    assert distance(B((1, 3)), B((1, 3))) == 0
    assert distance(B((1, 3)), Box.point([-0.1])) == pytest.approx(1.1)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        contains(B((0, 1)), B((0, 1), (0, 1)))
    with pytest.raises(ValueError):
        distance(B((0, 1)), B((0, 1), (0, 1)))


def test_negative_zero_is_normalised():
    assert str(Box.from_bounds([-0.0], [0.0])) == "[0.0, 0.0]"


finite = st.floats(-100, 100, allow_nan=False)
radius = st.floats(0, 10, allow_nan=False)


@st.composite
def boxes(draw, dims=2):
    pairs = []
    for _ in range(dims):
        a, b = draw(finite), draw(finite)
        pairs.append((min(a, b), max(a, b)))
    return Box.parse(pairs)


@given(boxes(), radius, radius)
def test_inflate_composes(b, a, c):
    twice = inflate(inflate(b, a), c)
    once = inflate(b, a + c)
    # equal up to the outward rounding of each step
    assert np.allclose(twice.lo, once.lo, rtol=0, atol=1e-12)
    assert np.allclose(twice.hi, once.hi, rtol=0, atol=1e-12)
    assert contains(twice, b) and contains(once, b)


@given(st.lists(boxes(), min_size=1, max_size=6))
def test_hull_contains_members(bs):
    h = hull(bs)
    assert all(contains(h.box, b) for b in bs)


@given(boxes(), boxes())
def test_distance_zero_iff_contains(a, b):
    assert (distance(a, b) == 0) == contains(a, b)


@given(boxes(), boxes())
def test_distance_is_smallest_inflation(a, b):
    d = distance(a, b)
    assert contains(inflate(a, d), b)
