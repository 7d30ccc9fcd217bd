"""
tests/test_dynamics.py
──────────────────────
Pytest suite for points, stepping, lifting, twists and orbit scans.

Run:
    pytest tests/test_dynamics.py -v
"""

import os
import random
import sys

import pytest

# Ensure project root is importable
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dynamics import (
    AllMiddle,
    Digits,
    OutOfTruncation,
    Point,
    ProductPoint,
    RandomDigits,
    TopOfTruncation,
    TwistSpec,
    check_window,
    climbs_into,
    deep_point,
    detect_offset,
    iterate,
    iterate_product,
    level,
    lift,
    make_point,
    make_product,
    orbit_levels,
    random_point,
    return_time_check,
    step,
    subcolumn,
    twist,
    valid_window,
    xinfty_window_ok,
)
from params import ConstructionParams
from tower import build_tower
from utils import OutOfTruncationError


@pytest.fixture(scope="module")
def tower():
    return build_tower(ConstructionParams(trunc=9))


# ── Single points ──────────────────────────────────────────────────────────────

def test_point_range_checked(tower):
    """Levels outside tower N and stages above the truncation are rejected."""
    with pytest.raises(ValueError, match="out of range"):
        make_point(tower, 4, 241)
    with pytest.raises(ValueError, match="exceeds built stage"):
        make_point(tower, 10, 0)


def test_step_and_top_of_truncation(tower):
    """Stepping from the top level of tower N reports the truncation boundary."""
    assert step(make_point(tower, 4, 7)).idx == 8
    assert step(make_point(tower, 4, 240)) == TopOfTruncation(4)


def test_iterate_overshoot(tower):
    """Iterating past either end of tower N returns OutOfTruncation with the signed k."""
    p = make_point(tower, 4, 0)
    assert iterate(p, 240).idx == 240
    assert iterate(p, -1) == OutOfTruncation(4, -1)
    assert iterate(make_point(tower, 4, 240), 2) == OutOfTruncation(4, 2)


def test_level_and_subcolumn(tower):
    """Level 85 of tower 4 is level 5 of tower 3 in its second subcolumn."""
    p = make_point(tower, 4, 85)
    assert level(p, 3) == 5
    assert subcolumn(p, 3) == 2
    assert subcolumn(p, 4) is None
    assert level(make_point(tower, 4, 40), 3) is None


def test_lift_all_middle(tower):
    """Level 5 of tower 2 lifted by middle subcolumns lands at 5 + 13 + 80."""
    q = lift(make_point(tower, 2, 5), 4)
    assert q.idx == 98
    assert level(q, 2) == 5
    assert [subcolumn(q, n) for n in (2, 3)] == [2, 2]


def test_lift_explicit_digits(tower):
    """Explicit digits choose the subcolumns, and their count must match."""
    assert lift(make_point(tower, 2, 5), 4, Digits((1, 3))).idx == 166
    with pytest.raises(ValueError, match="expected 2 digits"):
        lift(make_point(tower, 2, 5), 4, Digits((1,)))
    with pytest.raises(ValueError, match="cannot lift"):
        lift(make_point(tower, 4, 5), 2)


def test_lift_random_digits_is_seeded(tower):
    """Test that seeded random lifts repeat and keep the lower level."""
    p = make_point(tower, 2, 5)
    assert lift(p, 6, RandomDigits(3)) == lift(p, 6, RandomDigits(3))
    assert level(lift(p, 6, RandomDigits(3)), 2) == 5


def test_random_points_are_deterministic(tower):
    """The same seed draws the same uniform point."""
    a = random_point(tower, 9, random.Random(7))
    b = random_point(tower, 9, random.Random(7))
    assert a == b


def test_deep_point_uses_middle_subcolumns(tower):
    """Deep points sit in subcolumn 2 at every stage above the depth."""
    rng = random.Random(11)
    for _ in range(20):
        p = deep_point(tower, 9, 3, rng)
        assert level(p, 3) is not None
        assert all(subcolumn(p, n) == 2 for n in range(3, 9))


def test_climbs_into(tower):
    """A window fits one passage through tower 3 only while it stays below the top."""
    p = make_point(tower, 4, 0)
    assert climbs_into(p, 3, 0, 39)
    assert not climbs_into(p, 3, 0, 40)
    assert not climbs_into(p, 3, -1, 10)


def test_return_time_law(tower):
    """After h_4 = 241 steps a point in Sub1 of stage 4 is at the same level of Sub2."""
    p = make_point(tower, 9, tower.embed(4, 10, [1, 2, 2, 2, 2]))
    assert return_time_check(p, 1) is True


def test_return_time_law_hypotheses(tower):
    """The last occurrence and the bottom level do not meet the hypotheses."""
    last = make_point(tower, 9, tower.embed(4, 10, [3, 3, 3, 3, 1]))
    bottom = make_point(tower, 9, tower.embed(4, 0, [1, 2, 2, 2, 2]))
    assert return_time_check(last, 1) is None
    assert return_time_check(bottom, 1) is None


def test_return_time_law_random_points(tower):
    """Test that h_4 steps keep 10^4 random points of tower 9 at the same level of tower 4 or one below."""
    rng = random.Random(31)
    results = [return_time_check(random_point(tower, 9, rng), 1) for _ in range(10000)]
    assert False not in results
    assert results.count(True) > 5000


def test_return_time_law_second_special_stage():
    """Test the return time law for ℓ = 2, where h_9 steps stay inside tower 15."""
    tower15 = build_tower(ConstructionParams(trunc=15))
    rng = random.Random(32)
    results = [return_time_check(random_point(tower15, 15, rng), 2) for _ in range(2000)]
    assert False not in results
    assert results.count(True) > 1000


def test_level_grows_with_stage():
    """Test that a point's level in tower n + 1 is at least its level in tower n."""
    tower12 = build_tower(ConstructionParams(trunc=12))
    rng = random.Random(33)
    for _ in range(10000):
        p = random_point(tower12, 12, rng)
        levels = [level(p, n) for n in range(13)]
        for lower, upper in zip(levels, levels[1:]):
            if lower is not None and upper is not None:
                assert upper >= lower
        assert levels[12] == p.idx


def test_xinfty_window(tower):
    """A point near the first occurrence of tower 0 fails the margin check."""
    p = make_point(tower, 9, tower.embed(0, 0, [2] * 9))
    check = xinfty_window_ok(p, [1])
    assert not check
    assert "within 100" in check.reason
    assert xinfty_window_ok(p, [1], margin=0)
    assert "truncation" in xinfty_window_ok(p, [3]).reason


# ── Product points ─────────────────────────────────────────────────────────────

def test_product_point_properties(tower):
    """d, trunc and idx are read off the coordinates."""
    x = make_product(tower, 4, [10, 90])
    assert x.d == 2
    assert x.trunc == 4
    assert x.idx == (10, 90)


def test_product_point_rejects_mixed_truncations(tower):
    """Coordinates of a product point share one truncation."""
    with pytest.raises(ValueError, match="different truncations"):
        ProductPoint((make_point(tower, 4, 0), make_point(tower, 5, 0)))


def test_iterate_product(tower):
    """Every coordinate moves by k, and leaving tower N fails for the whole point."""
    x = make_product(tower, 4, [10, 90])
    assert iterate_product(x, 5).idx == (15, 95)
    assert isinstance(iterate_product(x, 151), OutOfTruncation)


def test_twist_spec_partition():
    """G0 defaults to the complement of G1, and a bad partition is rejected."""
    spec = TwistSpec(d=3, g1=frozenset({2}))
    assert spec.g0 == frozenset({1, 3})
    assert spec.swapped().g1 == frozenset({1, 3})
    with pytest.raises(ValueError, match="nonempty"):
        TwistSpec(d=2, g1=frozenset())
    with pytest.raises(ValueError, match="do not partition"):
        TwistSpec(d=2, g1=frozenset({1}), g0=frozenset({1, 2}))


def test_twist_moves_g1_only(tower):
    """Only coordinates in G1 advance under a twist."""
    x = make_product(tower, 4, [3, 5])
    assert twist(x, TwistSpec(d=2, g1=frozenset({2}))).idx == (3, 6)
    top = make_product(tower, 4, [240, 5])
    assert isinstance(twist(top, TwistSpec(d=2, g1=frozenset({1}))), TopOfTruncation)


def test_detect_offset(tower):
    """Offset of two points of the same truncation, None across truncations."""
    assert detect_offset(make_point(tower, 4, 10), make_point(tower, 4, 15)) == 5
    assert detect_offset(make_point(tower, 4, 10), make_point(tower, 5, 15)) is None


# ── Orbit scans ────────────────────────────────────────────────────────────────

def test_valid_window(tower):
    """The valid window is bounded by the lowest and the highest coordinate."""
    assert valid_window(make_product(tower, 4, [10, 90])) == (-10, 150)


def test_check_window_reports_valid_window(tower):
    """Test that a window leaving tower N raises with the largest valid window."""
    x = make_product(tower, 4, [10, 90])
    with pytest.raises(OutOfTruncationError, match="largest valid window") as info:
        check_window(x, -11, 0)
    assert info.value.valid_window == (-10, 150)
    with pytest.raises(ValueError, match="empty window"):
        check_window(x, 5, 4)


def test_orbit_levels(tower):
    """Coordinate 1 climbs Sub1 of stage 3, coordinate 2 climbs Sub2."""
    x = make_product(tower, 4, [10, 90])
    levels, t = orbit_levels(x, 3, -10, 35)
    assert levels.shape == (2, 46)
    assert levels[:, 0].tolist() == [0, 0]
    assert t[:, 0].tolist() == [1, 2]
    assert levels[:, 39].tolist() == [39, 39]
    assert levels[:, 40].tolist() == [-1, -1]
    assert t[:, 40].tolist() == [0, 0]
