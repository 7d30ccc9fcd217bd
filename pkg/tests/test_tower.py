"""
tests/test_tower.py
───────────────────
Pytest suite for tower heights, layouts, projections and the fake tower.

Run:
    pytest tests/test_tower.py -v
"""

import os
import random
import sys
from fractions import Fraction

import numpy as np
import pytest

# Ensure project root is importable
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from params import ConstructionParams
from tower import AFTER1, AFTER3, EXTRA2, Child, Spacer, Tower, build_tower, ternary_rank
from utils import ParamsError

HEIGHTS = (
    1, 4, 13, 40, 241, 724, 2173, 6520, 19561, 78244, 234733, 704200,
    2112601, 6337804, 19013413, 57040240, 228160960,
)


@pytest.fixture(scope="module")
def tower():
    return build_tower(ConstructionParams(trunc=9))


@pytest.fixture(scope="module")
def tower12():
    return build_tower(ConstructionParams(trunc=12))


@pytest.fixture(scope="module")
def tower15():
    return build_tower(ConstructionParams(trunc=15))


# ── Heights ────────────────────────────────────────────────────────────────────

def test_heights_default_sequence():
    """h_0..h_16 follow h_{n+1} = 3h_n + 3s + 1 exactly."""
    assert build_tower(ConstructionParams(trunc=16)).heights == HEIGHTS


def test_stage_info_special_and_normal(tower):
    """Stages 3 and 8 are special with s = h_{n′}; stage 4 has no spacer blocks."""
    info = tower.stage_info(3)
    assert (info.special, info.ell, info.k, info.s) == (True, 1, 0, 40)
    info = tower.stage_info(8)
    assert (info.special, info.ell, info.k, info.s) == (True, 2, 1, 6520)
    assert not tower.stage_info(4).special
    assert tower.stage_info(4).s == 0


def test_stage_info_out_of_range(tower):
    """Stage N itself has no layout inside a truncation at N."""
    with pytest.raises(ValueError, match="out of range"):
        tower.stage_info(9)


def test_measure_of_tower(tower):
    """μ(X_n) = h_n / 3^n, and it at least doubles across a special stage."""
    assert tower.measure_of_tower(0) == 1
    assert tower.measure_of_tower(4) == Fraction(241, 81)
    assert tower.measure_of_tower(4) / tower.measure_of_tower(3) >= 2


def test_invalid_params_rejected():
    """A tower refuses parameters that fail validation."""
    with pytest.raises(ParamsError, match="invalid construction parameters"):
        Tower(ConstructionParams(l_seq=(1, 2, 3)))


def test_build_tower_is_cached():
    params = ConstructionParams(trunc=5)
    assert build_tower(params) is build_tower(ConstructionParams(trunc=5))


# ── Layout & projection ────────────────────────────────────────────────────────

def test_special_stage_layout(tower):
    """Stage 3: Sub1 | after1 | Sub2 | after2 | extra2 | Sub3 | after3 with s = 40."""
    layout = tower.layout(3)
    assert [(s.label, s.start, s.length) for s in layout.segments] == [
        ("1", 0, 40), ("after1", 40, 40), ("2", 80, 40), ("after2", 120, 40),
        ("extra2", 160, 1), ("3", 161, 40), ("after3", 201, 40),
    ]
    assert layout.total == tower.height(4)


def test_offsets(tower):
    """Subcolumn offsets are 0, h + s and 2(h + s) + 1."""
    assert [tower.offset(3, t) for t in (1, 2, 3)] == [0, 80, 161]
    with pytest.raises(ValueError, match="subcolumn index"):
        tower.offset(3, 4)


def test_project_special_stage(tower):
    assert tower.project(3, 39) == Child(39, 1)
    assert tower.project(3, 40) == Spacer(AFTER1, 0)
    assert tower.project(3, 160) == Spacer(EXTRA2, 0)
    assert tower.project(3, 161) == Child(0, 3)
    assert tower.project(3, 240) == Spacer(AFTER3, 39)


def test_project_normal_stage(tower):
    """Tower 1 is 0, 0, spacer, 0 seen from tower 0."""
    assert [tower.project(0, j) for j in range(4)] == [
        Child(0, 1), Child(0, 2), Spacer(EXTRA2, 0), Child(0, 3),
    ]


def test_project_rejects_bad_level(tower):
    with pytest.raises(ValueError, match="out of range"):
        tower.project(0, 4)


def test_project_successor_stays_in_subcolumn(tower):
    """Test that the level above a non-top child is the next level of the same subcolumn."""
    rng = random.Random(2024)
    checked = 0
    for _ in range(20000):
        n = rng.randrange(tower.N)
        j = rng.randrange(tower.height(n + 1) - 1)
        cls = tower.project(n, j)
        if not isinstance(cls, Child) or cls.level > tower.height(n) - 2:
            continue
        assert tower.project(n, j + 1) == Child(cls.level + 1, cls.t)
        checked += 1
    assert checked > 10000


# ── Digits ─────────────────────────────────────────────────────────────────────

def test_decompose_and_embed(tower):
    """Level 5 of tower 2 is level 0 of tower 0 with digits t_0 = t_1 = 2."""
    assert tower.decompose(2, 5) == [(1, Child(1, 2)), (0, Child(0, 2))]
    assert tower.embed(0, 0, [2, 2]) == 5
    assert tower.level_and_t(2, 5, 0) == (0, 2)


def test_decompose_marks_outside_below_spacer(tower):
    """Everything below a spacer in the chain is outside."""
    chain = tower.decompose(2, 8)
    assert chain[0] == (1, Spacer(EXTRA2, 0))
    assert chain[1] == (0, None)
    assert tower.level_and_t(2, 8, 1) == (None, None)


def test_embed_round_trip_scalar(tower12):
    """Test that embed followed by level_and_t and occurrence_index recovers the level and digits."""
    rng = random.Random(7)
    for _ in range(10000):
        N = rng.randint(1, 12)
        n = rng.randrange(N)
        j = rng.randrange(tower12.height(n))
        digits = [rng.randint(1, 3) for _ in range(N - n)]
        idx = tower12.embed(n, j, digits)
        assert 0 <= idx < tower12.height(N)
        assert tower12.level_and_t(N, idx, n) == (j, digits[0])
        assert tower12.occurrence_index(n, N, idx) == ternary_rank(reversed(digits))


def test_embed_round_trip_vectorized(tower12):
    """Test that levels_array inverts embed on random batches for every n < N ≤ 12."""
    rng = random.Random(8)
    for N in range(1, 13):
        for n in range(N):
            starts = tower12.occurrence_starts(n, N)
            cases = [
                (rng.randrange(tower12.height(n)), [rng.randint(1, 3) for _ in range(N - n)])
                for _ in range(128)
            ]
            idx = np.array([tower12.embed(n, j, digits) for j, digits in cases], dtype=np.int64)
            levels, t = tower12.levels_array(n, N, idx)
            assert levels.tolist() == [j for j, _ in cases]
            assert t.tolist() == [digits[0] for _, digits in cases]
            ranks = [ternary_rank(reversed(digits)) for _, digits in cases]
            assert (starts[ranks] + levels == idx).all()


def test_occurrences(tower):
    """Tower 0 occurs 9 times in tower 2 with the extra2 spacers skipped."""
    assert tower.occurrence_index(1, 2, 5) == 1
    assert tower.occurrence_index(1, 2, 8) is None
    starts = tower.occurrence_starts(0, 2)
    assert starts.tolist() == [0, 1, 3, 4, 5, 7, 9, 10, 12]


@pytest.mark.parametrize(
    "ell, stages",
    [(1, range(1, 3)), (2, range(4, 8)), (3, range(9, 15))],
)
def test_occurrence_gaps_between_special_stages(tower15, ell, stages):
    """Test that copies of tower n inside tower n_ℓ are separated by 0 or 1 spacer when no special stage lies between."""
    n_ell = tower15.params.n_of(ell)
    for n in stages:
        gaps = np.diff(tower15.occurrence_starts(n, n_ell)) - tower15.height(n)
        assert set(gaps.tolist()) <= {0, 1}
        assert len(gaps) == 3 ** (n_ell - n) - 1


def test_occurrence_gaps_across_special_stage(tower):
    """A special stage between n and m leaves gaps of s_{n_ℓ}."""
    gaps = np.diff(tower.occurrence_starts(3, 4)) - tower.height(3)
    assert gaps.tolist() == [40, 41]


def test_ternary_rank():
    assert ternary_rank([3, 1]) == 6
    assert ternary_rank([]) == 0


# ── Vectorized paths ───────────────────────────────────────────────────────────

def test_levels_array_matches_scalar(tower):
    """Test that the vectorized decomposition agrees with level_and_t."""
    idx = np.arange(tower.height(2), dtype=np.int64)
    levels, t = tower.levels_array(1, 2, idx)
    assert levels.tolist() == [0, 1, 2, 3, 0, 1, 2, 3, -1, 0, 1, 2, 3]
    assert t.tolist() == [1, 1, 1, 1, 2, 2, 2, 2, 0, 3, 3, 3, 3]
    for j in range(0, tower.height(5), 7):
        lvl, tt = tower.levels_array(2, 5, np.array([j]))
        expected = tower.level_and_t(5, j, 2)
        assert (lvl[0] if lvl[0] >= 0 else None) == expected[0]
        assert (int(tt[0]) or None) == expected[1]


def test_levels_array_successor(tower12):
    """Test that the next tower-N level sits one level higher in tower n whenever it is not the top."""
    rng = np.random.default_rng(5)
    for n in range(0, 12):
        idx = rng.integers(0, tower12.height(12) - 1, size=2000)
        levels, t = tower12.levels_array(n, 12, idx)
        next_levels, next_t = tower12.levels_array(n, 12, idx + 1)
        climbing = (levels >= 0) & (levels < tower12.height(n) - 1)
        assert climbing.any()
        assert (next_levels[climbing] == levels[climbing] + 1).all()
        assert (next_t[climbing] == t[climbing]).all()


def test_top_level_steps_to_spacer_or_next_copy(tower12):
    """Test that the level after the top of tower n is a spacer or level 0 of the next copy."""
    for n in range(0, 12):
        starts = tower12.occurrence_starts(n, 12)
        tops = starts[:-1] + tower12.height(n) - 1
        next_levels, _ = tower12.levels_array(n, 12, tops + 1)
        assert set(next_levels.tolist()) <= {-1, 0}
        assert (np.diff(starts) >= tower12.height(n)).all()


def test_levels_array_rejects_out_of_range(tower):
    with pytest.raises(ValueError, match="out of range"):
        tower.levels_array(0, 2, np.array([13]))


def test_level_census_counts_occurrences(tower):
    """Tower 3 holds 9 copies of tower 1 and 4 spacers."""
    counts = tower.level_census(1, 3)
    assert counts.tolist() == [9, 9, 9, 9]


@pytest.mark.parametrize("N", range(0, 13))
def test_level_census_full_sweep(tower12, N):
    """Test that every level of tower n appears 3^{N−n} times in a full sweep of tower N."""
    for n in range(N + 1):
        counts = tower12.level_census(n, N)
        assert len(counts) == tower12.height(n)
        assert (counts == 3 ** (N - n)).all()


# ── Fake tower ─────────────────────────────────────────────────────────────────

def test_fake_stage(tower):
    """n′ = n_ℓ − k(ℓ): 3 for ℓ = 1 and 7 for ℓ = 2."""
    assert tower.fake_stage(1) == 3
    assert tower.fake_stage(2) == 7


def test_fake_level_and_extension(tower):
    """Offset 5 of the after1 block at stage 8 is fake level 5 of tower 7."""
    j = 19561 + 5
    assert tower.fake_level(2, j) == (AFTER1, 5)
    assert tower.fake_level(2, 5) is None
    assert tower.extended_level(2, j, 7) == 5
    assert tower.extended_level_and_t(2, j, 6) == (5, 1)
    assert tower.extended_subcolumn(2, 5, 6) == 1


def test_extended_level_above_fake_tower(tower):
    with pytest.raises(ValueError, match="above the fake tower"):
        tower.extended_level(2, 0, 8)
