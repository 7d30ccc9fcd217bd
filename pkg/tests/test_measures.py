"""
tests/test_measures.py
──────────────────────
Pytest suite for empirical measures, box statistics, the twisting check and
the rational-ergodicity second moment.

Run:
    pytest tests/test_measures.py -v
"""

import os
import random
import sys
from fractions import Fraction

import pytest

# Ensure project root is importable
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dynamics import ProductPoint, TwistSpec, deep_point, level, make_product, random_point, valid_window
from measures import (
    BoxKey,
    box_ratio_distance,
    count_box,
    count_Cn,
    default_r_values,
    diagonal_spread,
    edge_ratio,
    empirical,
    graph_support_fraction,
    hopf_ratio,
    interior_margin,
    product_distance,
    rational_ergodicity_stat,
    ratio,
    twist_example,
    verify_twist_invariance,
)
from params import ConstructionParams
from tower import build_tower
from utils import HypothesisError, OutOfTruncationError, ParamsError, ZeroMassError


@pytest.fixture(scope="module")
def tower():
    return build_tower(ConstructionParams(trunc=9))


@pytest.fixture(scope="module")
def hand_point(tower):
    return make_product(tower, 4, [10, 90])


@pytest.fixture(scope="module")
def sweep(tower):
    """γ over the whole of tower 4 for d = 1."""
    return empirical(make_product(tower, 4, [0]), [(0, 240)])


# ── Construction ───────────────────────────────────────────────────────────────

def test_intervals_are_merged(hand_point):
    """Overlapping intervals merge and the size counts each shift once."""
    gamma = empirical(hand_point, [(20, 21), (0, 5), (3, 9)])
    assert gamma.intervals == ((0, 9), (20, 21))
    assert gamma.size == 12


def test_empirical_checks_truncation(hand_point):
    """An interval leaving tower N is refused up front."""
    with pytest.raises(OutOfTruncationError):
        empirical(hand_point, [(-11, 0)])


def test_box_counts_are_cached(hand_point, mocker):
    """Test that box counts are scanned once per n."""
    import measures

    gamma = empirical(hand_point, [(-10, 29)])
    scan = mocker.spy(measures, "_scan_boxes")
    gamma.box_counts(3)
    gamma.box_counts(3)
    assert scan.call_count == 1


# ── Box ratios ─────────────────────────────────────────────────────────────────

def test_diagonal_boxes_of_hand_point(hand_point):
    """The hand-traced crossing charges one box per level on the diagonal (0, 0)."""
    gamma = empirical(hand_point, [(-10, 29)])
    assert count_Cn(gamma, 3) == 40
    assert ratio(gamma, BoxKey(3, (5, 5))) == Fraction(1, 40)
    assert count_box(gamma, BoxKey(3, (5, 6))) == 0
    assert BoxKey(3, (7, 5)).diagonal == (2, 0)


def test_box_level_checked(hand_point):
    """A box level above h_n − 1 is refused."""
    gamma = empirical(hand_point, [(-10, 29)])
    with pytest.raises(ValueError, match="outside"):
        count_box(gamma, BoxKey(3, (40, 0)))


def test_box_dimension_checked(hand_point):
    """Test that a box with fewer levels than coordinates is refused."""
    gamma = empirical(hand_point, [(-10, 29)])
    with pytest.raises(ParamsError, match="levels but the measure has d = 2"):
        count_box(gamma, BoxKey(3, (5,)))
    with pytest.raises(ParamsError, match="d = 2"):
        ratio(gamma, BoxKey(3, (5, 5, 5)))


def test_zero_mass(hand_point):
    """A window with no C_3 visit has no ratio."""
    gamma = empirical(hand_point, [(30, 35)])
    with pytest.raises(ZeroMassError, match="no mass"):
        ratio(gamma, BoxKey(3, (0, 0)))


def test_diagonal_spread(hand_point):
    """A full crossing has spread 0, a partial one spread 1."""
    assert diagonal_spread(empirical(hand_point, [(-10, 29)]), 3) == 0
    assert diagonal_spread(empirical(hand_point, [(-10, 10)]), 3) == 1


def test_diagonal_spread_on_random_intervals(tower):
    """Test that a single interval never charges one diagonal unevenly by more than 1."""
    rng = random.Random(21)
    for _ in range(60):
        d = rng.randint(1, 3)
        x = ProductPoint(tuple(random_point(tower, 6, rng) for _ in range(d)))
        a, b = valid_window(x)
        lo = rng.randint(a, b)
        hi = rng.randint(lo, min(b, lo + 1500))
        gamma = empirical(x, [(lo, hi)])
        for n in range(0, 5):
            if count_Cn(gamma, n):
                assert diagonal_spread(gamma, n) <= 1


def test_box_ratio_distance(hand_point):
    """Distance between the full crossing and its first half."""
    full = empirical(hand_point, [(-10, 29)])
    half = empirical(hand_point, [(-10, 9)])
    assert box_ratio_distance(full, full, 3) == 0
    assert box_ratio_distance(full, half, 3) == Fraction(1, 40)


# ── Trend statistics ───────────────────────────────────────────────────────────

@pytest.mark.parametrize("n", [1, 2, 3])
def test_edge_ratio_on_full_sweep(sweep, tower, n):
    """Every occurrence of tower n is crossed completely, so δ̂ = 2/h_n."""
    assert edge_ratio(sweep, n) == Fraction(2, tower.height(n))


def test_edge_ratio_decreases_on_long_sweep():
    """
    GIVEN the whole of tower 12 swept from level 0
    WHEN measuring the edge share of C_n for n = 2..8
    THEN it equals 2/h_n, never increases and ends below 0.05.
    """
    tower12 = build_tower(ConstructionParams(trunc=12))
    gamma = empirical(make_product(tower12, 12, [0]), [(0, tower12.height(12) - 1)])
    ratios = [edge_ratio(gamma, n) for n in range(2, 9)]
    assert ratios == [Fraction(2, tower12.height(n)) for n in range(2, 9)]
    assert all(b <= a for a, b in zip(ratios, ratios[1:]))
    assert ratios[-1] <= Fraction(1, 20)


def test_hopf_ratio(tower):
    """One box of tower 1 holds a quarter of the tower-1 mass of tower 4."""
    x = make_product(tower, 4, [0])
    assert hopf_ratio(x, BoxKey(1, (2,)), 0, 240) == Fraction(1, 4)


def test_product_distance(sweep, hand_point):
    """Test the product distance of a full sweep and of a diagonal-only measure."""
    assert product_distance(sweep, 1) == 0
    diagonal_only = empirical(hand_point, [(-10, 29)])
    assert product_distance(diagonal_only, 3) == Fraction(39, 1600)


def test_graph_support_fraction(tower):
    """All mass sits on the graph of the true offset and none on a wrong one."""
    x = make_product(tower, 4, [10, 15])
    gamma = empirical(x, [(-10, 24)])
    assert graph_support_fraction(gamma, 3, [5]) == 1
    assert graph_support_fraction(gamma, 3, [4]) == 0
    with pytest.raises(ValueError, match="expected 1 offsets"):
        graph_support_fraction(gamma, 3, [5, 6])


def test_product_distance_shrinks_with_window():
    """Test that two independent deep points look more like a product over 10^6 shifts than over 10^4."""
    tower13 = build_tower(ConstructionParams(trunc=13, d=2))
    rng = random.Random(13)
    x = ProductPoint((deep_point(tower13, 13, 10, rng), deep_point(tower13, 13, 10, rng)))
    short = product_distance(empirical(x, [(0, 10 ** 4 - 1)]), 2)
    long = product_distance(empirical(x, [(0, 10 ** 6 - 1)]), 2)
    assert long < short


def test_graph_support_inside_one_passage(tower):
    """
    GIVEN x2 = T^e x1 with |e| ≤ 10 and a window climbing tower n away from its edges
    WHEN the interior margin exceeds |e|
    THEN every C_n^2 visit sits on the graph of e.
    """
    rng = random.Random(10)
    for _ in range(40):
        p = deep_point(tower, 9, 4, rng)
        e = rng.randint(-10, 10)
        n = rng.randint(4, 8)
        x = make_product(tower, 9, [p.idx, p.idx + e])
        h, j = tower.height(n), level(p, n)
        pad = 2 * abs(e) + 1
        lo, hi = pad - j, h - 1 - pad - j
        margin = interior_margin(x, n, lo, hi)
        assert margin > abs(e)
        assert graph_support_fraction(empirical(x, [(lo, hi)]), n, [e]) == 1


def test_graph_support_follows_margin_on_random_windows(tower):
    """Test that a margin above |e| always gives full graph support on random windows."""
    rng = random.Random(11)
    checked = 0
    for _ in range(60):
        p = deep_point(tower, 9, 4, rng)
        e = rng.randint(-10, 10)
        x = make_product(tower, 9, [p.idx, p.idx + e])
        a, b = valid_window(x)
        lo = rng.randint(max(a, -5000), min(b, 5000))
        hi = rng.randint(lo, min(b, lo + 3000))
        gamma = empirical(x, [(lo, hi)])
        for n in range(1, 9):
            margin = interior_margin(x, n, lo, hi)
            if margin is not None and margin > abs(e):
                assert graph_support_fraction(gamma, n, [e]) == 1
                checked += 1
    assert checked > 0


def test_interior_margin(hand_point):
    """Margin is the distance to the nearest tower edge over the visits."""
    assert interior_margin(hand_point, 3, -10, 29) == 0
    assert interior_margin(hand_point, 3, -5, 20) == 5
    assert interior_margin(hand_point, 3, 30, 35) is None


# ── Twisting ───────────────────────────────────────────────────────────────────

def test_twist_example_passes(tower):
    """GIVEN the stage-2 example WHEN twisting coordinate 2 THEN every m-box count matches for m ≤ 2."""
    example = twist_example(tower, 2)
    assert example.J == (0, 7)
    assert example.J_shifted == (13, 20)
    assert example.spec.g1 == frozenset({2})
    report = verify_twist_invariance(example.x, example.J, example.J_shifted, example.spec, 2)
    assert [row.m for row in report.rows] == [0, 1, 2]
    assert report.passed


def test_swapped_twist_fails(tower):
    """Test that swapping G0 and G1 produces a counterexample."""
    example = twist_example(tower, 2)
    report = verify_twist_invariance(example.x, example.J, example.J_shifted, example.spec.swapped(), 2)
    assert not report.passed
    assert any(row.counterexample is not None for row in report.rows)


def test_twist_example_needs_normal_stage(tower):
    """The example needs a normal stage and at least two coordinates."""
    with pytest.raises(HypothesisError, match="special"):
        twist_example(tower, 3)
    with pytest.raises(HypothesisError, match="d >= 2"):
        twist_example(tower, 2, d=1)


def test_twist_at_top_raises(tower):
    """Twisting the top level of tower N leaves the truncation."""
    x = make_product(tower, 4, [3, 240])
    with pytest.raises(OutOfTruncationError, match="leaves tower"):
        verify_twist_invariance(x, (0, 0), (0, 0), TwistSpec(d=2, g1=frozenset({2})), 0)


# ── Rational ergodicity ────────────────────────────────────────────────────────

def test_default_r_values(tower):
    """h_3, 3·h_3, h_5, h_6 and ⌊h_8/3⌋ for the default sequences."""
    assert default_r_values(tower) == (40, 120, 724, 2173, 6520)
    assert default_r_values(build_tower(ConstructionParams(trunc=5))) == (40, 120)


@pytest.mark.parametrize("N", [9, 10, 11, 12])
def test_rational_ergodicity_bounded(N):
    """Test that M̂(r) lies in [1, 144] for every default r at N = 9..12."""
    tower12 = build_tower(ConstructionParams(trunc=12))
    for r in default_r_values(tower12):
        report = rational_ergodicity_stat(tower12, r, N)
        assert 1 <= report.ratio <= 144
        assert not report.short_tower
        assert report.boundary_error >= 0


def test_rational_ergodicity_single_step(tower):
    """S_1 is the indicator of B, whose mass is 1 inside tower 9."""
    report = rational_ergodicity_stat(tower, 1, 9)
    assert report.ratio == 1
    assert report.boundary_error == 0


def test_rational_ergodicity_refuses_short_tower(tower):
    """r must be positive and below h_N."""
    with pytest.raises(HypothesisError, match="does not exceed"):
        rational_ergodicity_stat(tower, 241, 4)
    with pytest.raises(ValueError, match="r must be"):
        rational_ergodicity_stat(tower, 0, 9)
