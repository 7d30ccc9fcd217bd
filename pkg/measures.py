"""
measures.py
───────────
Empirical measures γ_J = Σ_{j∈J} δ_{(T^{×d})^j x} and the statistics read
from them: n-box ratios, diagonal spread, edge ratio, Hopf ratio, graph
support, distance to the normalized product measure, twisting invariance and
the rational-ergodicity second moment.

A measure keeps only its base point and index intervals; box counts are
computed per n by a chunked scan and cached.
"""

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from crossings import chunk_ranges, progress_bar
from dynamics import ProductPoint, TopOfTruncation, TwistSpec, check_window, make_product, orbit_levels, twist
from tower import Tower
from utils import HypothesisError, OutOfTruncationError, ParamsError, ZeroMassError, get_logger, timer

logger = get_logger(__name__)

Box = tuple[int, ...]


# ── Boxes ──────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class BoxKey:
    """An n-box: the product of tower-n levels ``levels``."""
    n: int
    levels: Box

    @property
    def diagonal(self) -> Box:
        """Canonical n-diagonal id: levels minus their minimum."""
        low = min(self.levels)
        return tuple(level - low for level in self.levels)


def check_box(tower: Tower, key: BoxKey, d: Optional[int] = None) -> None:
    """
    Raises:
        ParamsError: If the box has a different number of levels than d.
        ValueError: If a level lies outside tower n.
    """
    if d is not None and len(key.levels) != d:
        raise ParamsError(f"box {key.levels} has {len(key.levels)} levels but the measure has d = {d}")
    h = tower.height(key.n)
    if not all(0 <= level < h for level in key.levels):
        raise ValueError(f"box {key.levels} has a level outside [0, {h})")


# ── Empirical measures ─────────────────────────────────────────────────────────

def _merge(intervals: Iterable[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    merged: list[list[int]] = []
    for a, b in sorted(intervals):
        if b < a:
            continue
        if merged and a <= merged[-1][1] + 1:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return tuple((a, b) for a, b in merged)


@dataclass(frozen=True)
class EmpiricalMeasure:
    """γ_J for a product point and a finite union of shift intervals."""
    base: ProductPoint
    intervals: tuple[tuple[int, int], ...]
    _cache: dict[int, Counter] = field(default_factory=dict, compare=False, repr=False)

    @property
    def size(self) -> int:
        return sum(b - a + 1 for a, b in self.intervals)

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def tower(self) -> Tower:
        return self.base.tower

    def box_counts(self, n: int) -> Counter:
        """Visit count of every charged n-box."""
        if n not in self._cache:
            self._cache[n] = _scan_boxes(self.base, n, self.intervals)
        return self._cache[n]


def _scan_boxes(x: ProductPoint, n: int, intervals: Sequence[tuple[int, int]]) -> Counter:
    counts: Counter = Counter()
    for lo, hi in intervals:
        for a, b in progress_bar(chunk_ranges(lo, hi), f"boxes at n={n}"):
            levels, _ = orbit_levels(x, n, a, b)
            charged = levels[:, (levels >= 0).all(axis=0)]
            if not charged.size:
                continue
            boxes, hits = np.unique(charged, axis=1, return_counts=True)
            for column, hit in zip(boxes.T, hits):
                counts[tuple(int(v) for v in column)] += int(hit)
    return counts


def empirical(x: ProductPoint, intervals: Iterable[tuple[int, int]]) -> EmpiricalMeasure:
    """
    Raises:
        OutOfTruncationError: If an interval leaves the truncation tower.
    """
    merged = _merge(intervals)
    for lo, hi in merged:
        check_window(x, lo, hi)
    return EmpiricalMeasure(base=x, intervals=merged)


def count_box(gamma: EmpiricalMeasure, key: BoxKey) -> int:
    check_box(gamma.tower, key, gamma.d)
    return gamma.box_counts(key.n).get(tuple(key.levels), 0)


def count_Cn(gamma: EmpiricalMeasure, n: int) -> int:
    """Mass of C_n^d."""
    return sum(gamma.box_counts(n).values())


def _mass(gamma: EmpiricalMeasure, n: int) -> int:
    total = count_Cn(gamma, n)
    if total == 0:
        raise ZeroMassError(f"empirical measure has no mass in C_{n}^{gamma.d}")
    return total


def ratio(gamma: EmpiricalMeasure, key: BoxKey) -> Fraction:
    """γ(B)/γ(C_n^d), exact.

    Raises:
        ZeroMassError: If γ(C_n^d) = 0.
    """
    return Fraction(count_box(gamma, key), _mass(gamma, key.n))


def box_ratio_distance(first: EmpiricalMeasure, second: EmpiricalMeasure, n: int) -> Fraction:
    """max over n-boxes of |γ1(B)/γ1(C_n^d) − γ2(B)/γ2(C_n^d)|."""
    m1, m2 = _mass(first, n), _mass(second, n)
    c1, c2 = first.box_counts(n), second.box_counts(n)
    return max(abs(Fraction(c1.get(b, 0), m1) - Fraction(c2.get(b, 0), m2)) for b in set(c1) | set(c2))


def diagonal_spread(gamma: EmpiricalMeasure, n: int) -> int:
    """
    max over charged n-diagonals of (max box count − min box count), boxes of
    the diagonal with no visit counting as zero.
    """
    h = gamma.tower.height(n)
    per_diagonal: dict[Box, list[int]] = {}
    for box, hits in gamma.box_counts(n).items():
        per_diagonal.setdefault(BoxKey(n, box).diagonal, []).append(hits)
    spread = 0
    for diagonal, hits in per_diagonal.items():
        length = h - max(diagonal)
        low = min(hits) if len(hits) == length else 0
        spread = max(spread, max(hits) - low)
    return spread


def edge_ratio(gamma: EmpiricalMeasure, n: int) -> Fraction:
    """γ(∂C_n^d)/γ(C_n^d): ∂ holds boxes with some level at 0 or h_n − 1."""
    top = gamma.tower.height(n) - 1
    edge = sum(hits for box, hits in gamma.box_counts(n).items() if 0 in box or top in box)
    return Fraction(edge, _mass(gamma, n))


def hopf_ratio(x: ProductPoint, key: BoxKey, lo: int, hi: int) -> Fraction:
    """Σ_{j∈J} 1_B / Σ_{j∈J} 1_{C_n^d} along J = [lo, hi]."""
    return ratio(empirical(x, [(lo, hi)]), key)


def graph_support_fraction(gamma: EmpiricalMeasure, n: int, offsets: Sequence[int]) -> Fraction:
    """Share of the C_n^d mass on boxes (j, j + e_2, …, j + e_d)."""
    if len(offsets) != gamma.d - 1:
        raise ValueError(f"expected {gamma.d - 1} offsets, got {len(offsets)}")
    on_graph = sum(
        hits for box, hits in gamma.box_counts(n).items()
        if all(box[i + 1] - box[0] == e for i, e in enumerate(offsets))
    )
    return Fraction(on_graph, _mass(gamma, n))


def product_distance(gamma: EmpiricalMeasure, n: int) -> Fraction:
    """max over all h_n^d n-boxes of |γ(B)/γ(C_n^d) − 1/h_n^d|."""
    total = _mass(gamma, n)
    boxes = gamma.tower.height(n) ** gamma.d
    uniform = Fraction(1, boxes)
    counts = gamma.box_counts(n)
    worst = max(abs(Fraction(hits, total) - uniform) for hits in counts.values())
    if len(counts) < boxes:
        worst = max(worst, uniform)
    return worst


def interior_margin(x: ProductPoint, n: int, lo: int, hi: int) -> Optional[int]:
    """
    Smallest distance from a coordinate level to the bottom or top of tower n,
    over the shifts in [lo, hi] that visit C_n^d. None when there is no visit.
    """
    top = x.tower.height(n) - 1
    margin: Optional[int] = None
    for a, b in chunk_ranges(lo, hi):
        levels, _ = orbit_levels(x, n, a, b)
        charged = levels[:, (levels >= 0).all(axis=0)]
        if not charged.size:
            continue
        local = int(np.minimum(charged, top - charged).min())
        margin = local if margin is None else min(margin, local)
    return margin


# ── Twisting invariance ────────────────────────────────────────────────────────

class TwistRow(BaseModel):
    m: int
    boxes: int
    passed: bool
    counterexample: Optional[tuple[Box, int, int]] = Field(
        default=None, description="(box, γ_J count, γ_J′ count after the twist)"
    )


class TwistReport(BaseModel):
    rows: list[TwistRow] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(row.passed for row in self.rows)


def verify_twist_invariance(x: ProductPoint, J: tuple[int, int], J_shifted: tuple[int, int],
                            spec: TwistSpec, m_max: int) -> TwistReport:
    """
    For m = 0..m_max: γ_J′(S⁻¹B) = γ_J(B) on every charged m-box B, where S
    is the twist. Boxes with no visit on either side are skipped.

    Raises:
        OutOfTruncationError: If a window or the twisted point leaves the truncation.
    """
    twisted = twist(x, spec)
    if isinstance(twisted, TopOfTruncation):
        raise OutOfTruncationError(f"twist of {x.idx} leaves tower {x.trunc}")
    before = empirical(x, [J])
    after = empirical(twisted, [J_shifted])
    report = TwistReport()
    for m in range(m_max + 1):
        c1, c2 = before.box_counts(m), after.box_counts(m)
        boxes = sorted(set(c1) | set(c2))
        bad = next((b for b in boxes if c1.get(b, 0) != c2.get(b, 0)), None)
        report.rows.append(TwistRow(
            m=m,
            boxes=len(boxes),
            passed=bad is None,
            counterexample=None if bad is None else (bad, c1.get(bad, 0), c2.get(bad, 0)),
        ))
    if not report.passed:
        logger.info("Twist invariance fails for G1=%s", sorted(spec.g1))
    return report


@dataclass(frozen=True)
class TwistExample:
    x: ProductPoint
    J: tuple[int, int]
    J_shifted: tuple[int, int]
    spec: TwistSpec
    n: int


def twist_example(tower: Tower, n: int, d: int = 2) -> TwistExample:
    """
    Coordinate 1 at level 3 of tower n in subcolumn t_n = 1, the others at
    level 5 in subcolumn 2, middle subcolumns above. J = [0, h_n − 6] stays in
    one n-crossing and J′ = J + h_n; the twist moves G1 = {2, …, d}.

    Raises:
        HypothesisError: If n is a special stage, h_n ≤ 6, d < 2, or n + 1 > N.
    """
    if d < 2:
        raise HypothesisError("the twist example needs d >= 2")
    if tower.params.ell_of_stage(n) is not None:
        raise HypothesisError(f"stage {n} is special; the example needs a normal stage")
    h = tower.height(n)
    if h <= 6 or n + 1 > tower.N:
        raise HypothesisError(f"stage {n} does not leave room for the example below N={tower.N}")
    tail = [2] * (tower.N - n - 1)
    idx = [tower.embed(n, 3, [1] + tail)] + [tower.embed(n, 5, [2] + tail)] * (d - 1)
    J = (0, h - 6)
    return TwistExample(
        x=make_product(tower, tower.N, idx),
        J=J,
        J_shifted=(J[0] + h, J[1] + h),
        spec=TwistSpec(d=d, g1=frozenset(range(2, d + 1))),
        n=n,
    )


# ── Rational ergodicity ────────────────────────────────────────────────────────

class RatErgReport(BaseModel):
    """Second moment of return counts to B = L_0^0 along r steps."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    r: int
    N: int
    first: Fraction = Field(description="∫_B S_r² dμ over starts with a full r-orbit in tower N")
    second: Fraction = Field(description="(∫_B S_r dμ)² over the same starts")
    ratio: Fraction
    boundary_error: Fraction = Field(description="μ-mass of B in the omitted top r levels")
    short_tower: bool = Field(description="h_N < 4r")


def default_r_values(tower: Tower) -> tuple[int, ...]:
    """h_{n_1}, 3·h_{n_1}, h_5, h_6 and ⌊h_{n_2}/3⌋, restricted to stages built in ``tower`` and r < h_N."""
    n_seq = tower.params.n_seq
    values = []
    if n_seq and n_seq[0] <= tower.N:
        values += [tower.height(n_seq[0]), 3 * tower.height(n_seq[0])]
    values += [tower.height(n) for n in (5, 6) if n <= tower.N]
    if len(n_seq) > 1 and n_seq[1] <= tower.N:
        values.append(tower.height(n_seq[1]) // 3)
    top = tower.height(tower.N)
    return tuple(sorted({r for r in values if r < top}))


@timer
def rational_ergodicity_stat(tower: Tower, r: int, N: int) -> RatErgReport:
    """
    Exact M̂(r) = ∫_B S_r² / (∫_B S_r)² with B = L_0^0, summed over tower-N
    levels j₀ < h_N − r. Each tower-N level carries mass 3^{−N}.

    Raises:
        ValueError: If r < 1.
        HypothesisError: If h_N ≤ r.
    """
    if r < 1:
        raise ValueError(f"r must be >= 1, got {r}")
    h = tower.height(N)
    if h <= r:
        raise HypothesisError(f"h_{N} = {h} does not exceed r = {r}")
    if h < 4 * r:
        logger.warning("h_%d = %d is below 4r = %d; boundary error dominates", N, h, 4 * r)

    in_b = np.zeros(h, dtype=bool)
    for a, b in chunk_ranges(0, h - 1):
        levels, _ = tower.levels_array(0, N, np.arange(a, b + 1, dtype=np.int64))
        in_b[a:b + 1] = levels == 0
    prefix = np.concatenate([[0], np.cumsum(in_b, dtype=np.int64)])
    starts = np.flatnonzero(in_b[: h - r])
    returns = prefix[starts + r] - prefix[starts]

    scale = Fraction(1, 3 ** N)
    first = scale * int((returns * returns).sum())
    second = (scale * int(returns.sum())) ** 2
    omitted = int(in_b[h - r:].sum())
    report = RatErgReport(
        r=r,
        N=N,
        first=first,
        second=second,
        ratio=first / second,
        boundary_error=scale * omitted,
        short_tower=h < 4 * r,
    )
    logger.info("M̂(%d) at N=%d is %.6f", r, N, float(report.ratio))
    return report
