"""
crossings.py
────────────
n-crossings of a product orbit and the Γ counting lemmas built on them.

An n-crossing is a maximal interval of shifts j along which every coordinate
of (T^{×d})^j x stays in tower n with a constant subcolumn t_n and climbs one
level per step. Scans are chunked (``tower.CHUNK`` shifts at a time) and runs
are stitched across chunk joins, so memory does not grow with the window.
"""

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from dynamics import (
    ProductPoint,
    TwistSpec,
    check_window,
    climbs_into,
    orbit_levels,
    valid_window,
)
from params import DerivedConstants, constants, k_of
from tower import CHUNK, Tower
from utils import HypothesisError, NotFoundError, OutOfTruncationError, get_logger, timer

logger = get_logger(__name__)

PROGRESS_MIN_CHUNKS = 4


# ── Crossing ───────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Crossing:
    """One n-crossing [start, stop] (inclusive) of a product orbit."""
    n: int
    start: int
    stop: int
    tvec: tuple[Optional[int], ...]
    first_levels: tuple[int, ...]
    substantial: bool
    synchronized: bool
    partial: bool

    @property
    def size(self) -> int:
        return self.stop - self.start + 1

    @property
    def interval(self) -> tuple[int, int]:
        return self.start, self.stop

    @property
    def last_levels(self) -> tuple[int, ...]:
        return tuple(level + self.size - 1 for level in self.first_levels)


def centered_interval(tower: Tower, n: int) -> tuple[int, int]:
    """I_n = {−⌊h_n/2⌋, …, −⌊h_n/2⌋ + h_n − 1}."""
    h = tower.height(n)
    lo = -(h // 2)
    return lo, lo + h - 1


def _overlap(a: int, b: int, c: int, d: int) -> int:
    return max(0, min(b, d) - max(a, c) + 1)


def is_substantial(tower: Tower, n: int, start: int, stop: int) -> bool:
    lo, hi = centered_interval(tower, n)
    return _overlap(start, stop, lo, hi) >= tower.params.effective_eta * tower.height(n)


# ── Scans ──────────────────────────────────────────────────────────────────────

def chunk_ranges(lo: int, hi: int) -> list[tuple[int, int]]:
    return [(a, min(a + CHUNK - 1, hi)) for a in range(lo, hi + 1, CHUNK)]


def progress_bar(chunks: list[tuple[int, int]], desc: str):
    return tqdm(chunks, desc=desc, unit="chunk", disable=len(chunks) <= PROGRESS_MIN_CHUNKS)


def visit_indicator(x: ProductPoint, n: int, lo: int, hi: int) -> np.ndarray:
    """Boolean array over lo..hi: every coordinate of the shifted point lies in C_n."""
    check_window(x, lo, hi)
    parts = []
    for a, b in progress_bar(chunk_ranges(lo, hi), f"visits C_{n}"):
        levels, _ = orbit_levels(x, n, a, b)
        parts.append((levels >= 0).all(axis=0))
    return np.concatenate(parts)


def visit_set(x: ProductPoint, n: int, lo: int, hi: int) -> np.ndarray:
    """Sorted shifts j in [lo, hi] with (T^{×d})^j x ∈ C_n^d."""
    return lo + np.flatnonzero(visit_indicator(x, n, lo, hi)).astype(np.int64)


def gamma_count(x: ProductPoint, n: int, lo: int, hi: int) -> int:
    """Γ = number of visits to C_n^d along [lo, hi]."""
    check_window(x, lo, hi)
    total = 0
    for a, b in progress_bar(chunk_ranges(lo, hi), f"Γ at C_{n}"):
        levels, _ = orbit_levels(x, n, a, b)
        total += int((levels >= 0).all(axis=0).sum())
    return total


def gamma_prefix(x: ProductPoint, n: int, lo: int, hi: int) -> np.ndarray:
    """Prefix sums of visits: Γ([lo+a, lo+b]) = P[b+1] − P[a]."""
    inside = visit_indicator(x, n, lo, hi)
    return np.concatenate([[0], np.cumsum(inside, dtype=np.int64)])


def _runs(x: ProductPoint, n: int, lo: int, hi: int) -> Iterator[tuple[int, int, np.ndarray, np.ndarray]]:
    """Yield (start, stop, levels at start, t at start) for every maximal run."""
    open_start: Optional[int] = None
    open_levels = open_t = None
    prev_levels = np.full((x.d, 1), -2, dtype=np.int64)
    prev_t = np.zeros((x.d, 1), dtype=np.int8)
    for a, b in progress_bar(chunk_ranges(lo, hi), f"{n}-crossings"):
        levels, tvals = orbit_levels(x, n, a, b)
        inside = (levels >= 0).all(axis=0)
        shifted_levels = np.concatenate([prev_levels, levels[:, :-1]], axis=1)
        shifted_t = np.concatenate([prev_t, tvals[:, :-1]], axis=1)
        cont = (
            inside
            & (shifted_levels >= 0).all(axis=0)
            & (levels == shifted_levels + 1).all(axis=0)
            & (tvals == shifted_t).all(axis=0)
        )
        breaks = np.flatnonzero(~cont)
        if open_start is not None:
            if breaks.size:
                yield open_start, a + int(breaks[0]) - 1, open_levels, open_t
                open_start = None
        for i in np.flatnonzero(inside & ~cont):
            pos = np.searchsorted(breaks, i, side="right")
            if pos < breaks.size:
                yield a + int(i), a + int(breaks[pos]) - 1, levels[:, i], tvals[:, i]
            else:
                open_start, open_levels, open_t = a + int(i), levels[:, i], tvals[:, i]
        prev_levels, prev_t = levels[:, -1:], tvals[:, -1:]
    if open_start is not None:
        yield open_start, hi, open_levels, open_t


def crossings(x: ProductPoint, n: int, lo: int, hi: int) -> list[Crossing]:
    """
    Every n-crossing meeting [lo, hi], clipped to the window.

    A crossing touching a window edge is partial unless some coordinate sits
    at level 0 on the left edge or at level h_n − 1 on the right edge. At
    n = N the subcolumn t_N is undefined, so every crossing is partial.

    Raises:
        OutOfTruncationError: If the window leaves the truncation tower.
    """
    tower = x.tower
    h = tower.height(n)
    at_top = n == x.trunc
    found: list[Crossing] = []
    for start, stop, first, tfirst in _runs(x, n, lo, hi):
        first_levels = tuple(int(v) for v in first)
        size = stop - start + 1
        partial = at_top or (start == lo and min(first_levels) > 0) or (
            stop == hi and max(first_levels) + size - 1 < h - 1
        )
        tvec = tuple(None if at_top else int(t) for t in tfirst)
        found.append(Crossing(
            n=n,
            start=start,
            stop=stop,
            tvec=tvec,
            first_levels=first_levels,
            substantial=is_substantial(tower, n, start, stop),
            synchronized=len(set(tvec)) == 1,
            partial=partial,
        ))
    logger.debug("Found %d %d-crossings in [%d, %d]", len(found), n, lo, hi)
    return found


def maximal_crossings(x: ProductPoint, n: int, lo: int, hi: int) -> list[Crossing]:
    """
    Crossings meeting [lo, hi] computed on a window widened by h_n on each
    side (clipped to the truncation), so their sizes are the true ones.
    """
    a, b = valid_window(x)
    h = x.tower.height(n)
    return [
        c for c in crossings(x, n, max(a, lo - h), min(b, hi + h))
        if c.stop >= lo and c.start <= hi
    ]


def n_intervals(tower: Tower, n: int, lo: int, hi: int) -> list[tuple[int, int]]:
    """Aligned n-intervals [q·h_n, (q+1)·h_n − 1] meeting [lo, hi]."""
    if hi < lo:
        return []
    h = tower.height(n)
    return [(q * h, (q + 1) * h - 1) for q in range(lo // h, hi // h + 1)]


def interval_in_crossing(x: ProductPoint, n: int, lo: int, hi: int) -> bool:
    """[lo, hi] lies inside one n-crossing; checked arithmetically."""
    return all(climbs_into(p, n, lo, hi) for p in x.coords)


# ── True and fake crossings ────────────────────────────────────────────────────

@dataclass(frozen=True)
class ShiftClass:
    """Classification of the shift r·h_{n′}: coordinates (1-based) in a fake tower or nowhere."""
    r: int
    fake: tuple[int, ...]
    outside: tuple[int, ...]

    @property
    def is_true(self) -> bool:
        return not self.fake and not self.outside


def _shifted_idx(x: ProductPoint, shift: int) -> list[int]:
    a, b = valid_window(x)
    if not a <= shift <= b:
        raise OutOfTruncationError(
            f"shift {shift} leaves tower {x.trunc}; largest valid window is [{a}, {b}]",
            valid_window=(a, b),
        )
    return [i + shift for i in x.idx]


def _require_stage(x: ProductPoint, stage: int) -> None:
    if stage > x.trunc:
        raise HypothesisError(f"stage {stage} is above the truncation {x.trunc}")


def classify_crossing_at(x: ProductPoint, ell: int, r: int) -> ShiftClass:
    """
    Which coordinates of (T^{×d})^{r·h_{n′}} x are in C_{n′} and which sit in
    a spacer block of stage n_ℓ (the fake tower n′).
    """
    tower = x.tower
    n_fake = tower.fake_stage(ell)
    upper = tower.params.n_of(ell) + 1
    _require_stage(x, upper)
    fake, outside = [], []
    for i, j in enumerate(_shifted_idx(x, r * tower.height(n_fake)), start=1):
        if tower.level_and_t(x.trunc, j, n_fake)[0] is not None:
            continue
        top = tower.level_and_t(x.trunc, j, upper)[0]
        if top is not None and tower.fake_level(ell, top) is not None:
            fake.append(i)
        else:
            outside.append(i)
    return ShiftClass(r=r, fake=tuple(fake), outside=tuple(outside))


class FakeShiftReport(BaseModel):
    """Fake positions per coordinate over a range of shifts."""
    ell: int
    n_fake: int
    spacing: int = Field(description="⌊h_{n_ℓ}/h_{n′}⌋: at most one fake shift per this many consecutive shifts")
    fake_shifts: dict[int, list[int]] = Field(default_factory=dict)
    spacing_ok: bool = True
    neighbour_checked: int = 0
    neighbour_failures: list[tuple[int, int]] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.spacing_ok and not self.neighbour_failures


def fake_shifts(x: ProductPoint, ell: int, r_lo: int, r_hi: int) -> FakeShiftReport:
    """
    Scan shifts r·h_{n′} for r_lo ≤ r ≤ r_hi and list fake coordinates.

    For k(ℓ) ≥ 1 a fake position in the first spacer block (or in the second
    block past its first level) must have t_{n′} = 3 one shift earlier and
    t_{n′} = 1 one shift later. Fake positions in the third block are listed
    but not checked, since the next shift leaves tower n_ℓ + 1. Nothing is
    checked when k(ℓ) = 0, and a shift whose neighbours fall outside
    [r_lo, r_hi] is skipped; ``neighbour_checked`` counts what was tested.
    """
    tower = x.tower
    n_ell = tower.params.n_of(ell)
    n_fake = tower.fake_stage(ell)
    h_fake = tower.height(n_fake)
    _require_stage(x, n_ell + 1)
    spacing = tower.height(n_ell) // h_fake
    report = FakeShiftReport(ell=ell, n_fake=n_fake, spacing=spacing)
    fake_by_coord: dict[int, list[int]] = {i: [] for i in range(1, x.d + 1)}

    for r in range(r_lo, r_hi + 1):
        for i in classify_crossing_at(x, ell, r).fake:
            fake_by_coord[i].append(r)

    for i, rs in fake_by_coord.items():
        if any(b - a < spacing for a, b in zip(rs, rs[1:])):
            report.spacing_ok = False
            logger.warning("Coordinate %d has fake shifts closer than %d: %s", i, spacing, rs)
        if k_of(tower.params, ell) == 0:
            continue
        base = x.coords[i - 1].idx
        for r in rs:
            j = base + r * h_fake
            top = tower.level_and_t(x.trunc, j, n_ell + 1)[0]
            block, offset = tower.fake_level(ell, top)
            if block not in ("after1", "after2") or (block == "after2" and offset == 0):
                continue
            if r - 1 < r_lo or r + 1 > r_hi:
                continue
            report.neighbour_checked += 1
            t_before = _t_at(tower, x.trunc, j - h_fake, n_fake)
            t_after = _t_at(tower, x.trunc, j + h_fake, n_fake)
            if (t_before, t_after) != (3, 1):
                report.neighbour_failures.append((i, r))
    report.fake_shifts = {i: rs for i, rs in fake_by_coord.items() if rs}
    return report


def _t_at(tower: Tower, N: int, j: int, n: int) -> Optional[int]:
    if not 0 <= j < tower.height(N):
        return None
    return tower.level_and_t(N, j, n)[1]


# ── n_good ─────────────────────────────────────────────────────────────────────

def find_n_good(x: ProductPoint, ell: int, start: Optional[int] = None) -> int:
    """
    Smallest n among start, …, start + d with [h_n, 2h_n] inside one
    n_ℓ-crossing. ``start`` defaults to n_ℓ − k(ℓ) + p1 + 2·p2.

    Raises:
        HypothesisError: If the default range does not fit below n_ℓ.
        NotFoundError: If no candidate qualifies.
    """
    tower, params = x.tower, x.tower.params
    n_ell = params.n_of(ell)
    if start is None:
        const = constants(params)
        start = n_ell - k_of(params, ell) + const.p1 + 2 * const.p2
        if start + x.d >= n_ell:
            raise HypothesisError(
                f"candidate range [{start}, {start + x.d}] does not fit below n_{ell} = {n_ell}"
            )
    _require_stage(x, n_ell)
    for n in range(start, start + x.d + 1):
        if n > x.trunc:
            break
        h = tower.height(n)
        if interval_in_crossing(x, n_ell, h, 2 * h):
            logger.info("n_good(ℓ=%d) = %d", ell, n)
            return n
        logger.debug("n=%d is bad for ℓ=%d", n, ell)
    raise NotFoundError(f"no n in [{start}, {start + x.d}] has [h_n, 2h_n] inside an {n_ell}-crossing")


# ── θ₁ and θ₂ ──────────────────────────────────────────────────────────────────

class RatioRow(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    crossing: tuple[int, int]
    first: tuple[int, int]
    second: tuple[int, int]
    gamma_first: int
    gamma_second: int
    ratio: Optional[Fraction]
    boundary: bool = False
    passed: bool


class Theta1Report(BaseModel):
    """Consecutive aligned n-interval pairs inside n_ℓ-crossings and their Γ ratios."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int
    ell: int
    ell_base: int
    theta1: Fraction
    n_in_range: bool = Field(description="n_{ℓ−1} − k(ℓ−1) + p1 ≤ n < n_ℓ")
    ell_ok: bool = Field(description="ℓ > ℓ̄ + 1")
    rows: list[RatioRow] = Field(default_factory=list)
    skipped_empty: int = 0

    @property
    def failures(self) -> list[RatioRow]:
        return [r for r in self.rows if not r.passed]

    @property
    def min_ratio(self) -> Optional[Fraction]:
        ratios = [r.ratio for r in self.rows if r.ratio is not None and not r.boundary]
        return min(ratios) if ratios else None

    @property
    def max_ratio(self) -> Optional[Fraction]:
        ratios = [r.ratio for r in self.rows if r.ratio is not None and not r.boundary]
        return max(ratios) if ratios else None


def _gamma(prefix: np.ndarray, lo: int, a: int, b: int) -> int:
    return int(prefix[b - lo + 1] - prefix[a - lo])


@timer
def verify_theta1(x: ProductPoint, n: int, ell: int, ell_base: int, lo: int, hi: int) -> Theta1Report:
    """
    θ₁ < Γ(I₂)/Γ(I₁) < 1/θ₁ for consecutive aligned n-intervals inside one
    n_ℓ-crossing of the window, Γ counted at C^d_{n_ℓ̄}. Pairs where only the
    first interval is inside the crossing are checked with Γ(I₂ ∩ J).

    Raises:
        HypothesisError: If no pair of n-intervals fits inside a crossing.
    """
    tower, params = x.tower, x.tower.params
    const = constants(params)
    n_ell = params.n_of(ell)
    n_base = params.n_of(ell_base)
    lower = params.n_of(ell - 1) - k_of(params, ell - 1) + const.p1
    report = Theta1Report(
        n=n, ell=ell, ell_base=ell_base, theta1=const.theta1, n_in_range=lower <= n < n_ell,
        ell_ok=ell > ell_base + 1,
    )
    prefix = gamma_prefix(x, n_base, lo, hi)
    theta1 = const.theta1
    for crossing in crossings(x, n_ell, lo, hi):
        a, b = crossing.interval
        inside = [iv for iv in n_intervals(tower, n, a, b) if iv[0] >= a and iv[1] <= b]
        for first, second in zip(inside, inside[1:]):
            g1, g2 = _gamma(prefix, lo, *first), _gamma(prefix, lo, *second)
            if g1 == 0 and g2 == 0:
                report.skipped_empty += 1
                continue
            ratio = Fraction(g2, g1) if g1 else None
            passed = ratio is not None and theta1 < ratio < 1 / theta1
            report.rows.append(RatioRow(
                crossing=crossing.interval, first=first, second=second,
                gamma_first=g1, gamma_second=g2, ratio=ratio, passed=passed,
            ))
        if not inside:
            continue
        edges = []
        if inside[0][0] > a:
            edges.append((inside[0], (inside[0][0] - tower.height(n), inside[0][0] - 1)))
        if inside[-1][1] < b:
            edges.append((inside[-1], (inside[-1][1] + 1, inside[-1][1] + tower.height(n))))
        for full, outer in edges:
            clipped = (max(outer[0], a), min(outer[1], b))
            g1, g2 = _gamma(prefix, lo, *full), _gamma(prefix, lo, *clipped)
            if g1 == 0 and g2 == 0:
                report.skipped_empty += 1
                continue
            passed = g1 > 0 and Fraction(g2, g1) < 1 / theta1
            report.rows.append(RatioRow(
                crossing=crossing.interval, first=full, second=clipped, gamma_first=g1,
                gamma_second=g2, ratio=Fraction(g2, g1) if g1 else None, boundary=True, passed=passed,
            ))
    if not report.rows:
        raise HypothesisError(f"no pair of {n}-intervals fits inside an {n_ell}-crossing of [{lo}, {hi}]")
    if report.failures:
        logger.warning("θ1 check failed on %d of %d pairs", len(report.failures), len(report.rows))
    return report


class Theta2Report(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int
    ell: int
    ell_base: int
    M: int
    log_theta2: float
    n_in_range: bool = Field(description="n_{ℓ−1} − k(ℓ−1) + p1 + p2 ≤ n < n_ℓ")
    intervals_checked: int = 0
    min_ratio: Optional[Fraction] = None
    worst: Optional[tuple[tuple[int, int], tuple[int, int]]] = None
    passed: bool = True


def _at_least_theta2(ratio: Fraction, const: DerivedConstants, M: int, log_theta2: float) -> bool:
    if ratio == 0:
        return False
    log_ratio = math.log(ratio.numerator) - math.log(ratio.denominator)
    if log_ratio > log_theta2 + 1.0:
        return True
    if log_ratio < log_theta2 - 1.0:
        return False
    return ratio >= const.theta2(M)


@timer
def verify_theta2(x: ProductPoint, n: int, ell: int, M: int, ell_base: int, lo: int, hi: int) -> Theta2Report:
    """
    min Γ(J)/Γ(I) over intervals I of length M·h_n (aligned starts) inside an
    n_ℓ-crossing and subintervals J of length ⌈η·h_n⌉, compared with θ₂(M).
    Longer J only increase Γ(J), so the shortest admissible J is enough.

    Raises:
        HypothesisError: If no interval of length M·h_n fits inside a crossing.
    """
    tower, params = x.tower, x.tower.params
    const = constants(params)
    h = tower.height(n)
    n_ell = params.n_of(ell)
    lower = params.n_of(ell - 1) - k_of(params, ell - 1) + const.p1 + const.p2
    log_theta2 = const.log_theta2(M)
    report = Theta2Report(
        n=n, ell=ell, ell_base=ell_base, M=M, log_theta2=log_theta2, n_in_range=lower <= n < n_ell,
    )
    width = M * h
    j_len = math.ceil(const.eta * h)
    prefix = gamma_prefix(x, params.n_of(ell_base), lo, hi)
    for crossing in crossings(x, n_ell, lo, hi):
        a, b = crossing.interval
        first = -(-a // h) * h
        for start in range(first, b - width + 2, h):
            stop = start + width - 1
            g_i = _gamma(prefix, lo, start, stop)
            if g_i == 0:
                continue
            base = start - lo
            sliding = prefix[base + j_len: base + width + 1] - prefix[base: base + width - j_len + 1]
            pos = int(np.argmin(sliding))
            ratio = Fraction(int(sliding[pos]), g_i)
            report.intervals_checked += 1
            if report.min_ratio is None or ratio < report.min_ratio:
                report.min_ratio = ratio
                report.worst = ((start, stop), (start + pos, start + pos + j_len - 1))
    if report.intervals_checked == 0:
        raise HypothesisError(f"no interval of length {width} fits inside an {n_ell}-crossing of [{lo}, {hi}]")
    report.passed = _at_least_theta2(report.min_ratio, const, M, log_theta2)
    return report


# ── Crossing statistics ────────────────────────────────────────────────────────

class CrossingStats(BaseModel):
    """Density of C^d_{n_ℓ̄} visits in I and mass of small n_ℓ̄-crossings."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    ell_base: int
    ell: int
    c: int
    interval: tuple[int, int]
    visits: int
    density: Fraction
    density_bound: Fraction
    small_proportion: Fraction
    proportion_bound: Fraction
    hypotheses: dict[str, bool] = Field(default_factory=dict)

    @property
    def hypothesis_ok(self) -> bool:
        return all(self.hypotheses.values())

    @property
    def bounds_ok(self) -> bool:
        return self.density >= self.density_bound and self.small_proportion <= self.proportion_bound


def verify_crossing_stats(x: ProductPoint, ell_base: int, ell: int, c: int, lo: int, hi: int) -> CrossingStats:
    """
    Exact statistics on I = [lo, hi] with the hypothesis flags of the
    counting bounds reported next to them.

    Raises:
        ValueError: If ``ell`` < 1 or c is outside [1, h_{n_ℓ̄}].
        OutOfTruncationError: If I leaves the truncation tower.
    """
    tower, params = x.tower, x.tower.params
    const = constants(params)
    if ell < 1:
        raise ValueError(f"ℓ must be >= 1, got {ell}")
    n_base = params.n_of(ell_base)
    h_base = tower.height(n_base)
    if not 1 <= c <= h_base:
        raise ValueError(f"c must lie in [1, {h_base}], got {c}")
    check_window(x, lo, hi)

    n_top = params.n_of(ell_base + ell)
    length = hi - lo + 1
    hypotheses = {
        "inside_crossing": n_top <= x.trunc and interval_in_crossing(x, n_top, lo, hi),
        "length": length >= const.eta * tower.height(params.n_of(ell_base + ell - 1)),
        "choice_of_lb": const.choice_of_lb(h_base, ell_base, c),
        "newcondlb": const.newcondlb(ell_base),
    }
    visits = gamma_count(x, n_base, lo, hi)
    small = 0
    for crossing in maximal_crossings(x, n_base, lo, hi):
        if crossing.size <= c:
            small += _overlap(crossing.start, crossing.stop, lo, hi)
    stats = CrossingStats(
        ell_base=ell_base,
        ell=ell,
        c=c,
        interval=(lo, hi),
        visits=visits,
        density=Fraction(visits, length),
        density_bound=(1 - const.eta) ** (2 * ell),
        small_proportion=Fraction(small, visits) if visits else Fraction(0),
        proportion_bound=const.K1 * Fraction(c, h_base) + const.K2 / 3 ** ell_base,
        hypotheses=hypotheses,
    )
    for name, ok in hypotheses.items():
        if not ok:
            logger.warning("Crossing-stats hypothesis %s not satisfied", name)
    return stats


# ── Substantial crossings ──────────────────────────────────────────────────────

class SubstantialCoverage(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    n: int
    ell: int
    height: int
    coverage: Fraction
    bound: Fraction
    substantial: int
    all_synchronized: bool
    min_size: Optional[int]
    hypothesis_ok: bool = Field(description="1/3^{k(ℓ−1)} < η/(2d)")

    @property
    def coverage_ok(self) -> bool:
        return self.coverage >= self.bound

    @property
    def synchronized_ok(self) -> bool:
        """Synchronized substantial crossings are long and at most two."""
        if not self.all_synchronized:
            return True
        return self.substantial <= 2 and self.min_size is not None and self.min_size >= self.bound * self.height


def substantial_coverage(x: ProductPoint, ell: int) -> SubstantialCoverage:
    """
    Share of I_n covered by substantial n-crossings at n = n_{ℓ−1}, against
    1 − (d+2)·η.

    Raises:
        OutOfTruncationError: If I_n widened by h_n leaves the truncation tower.
    """
    tower, params = x.tower, x.tower.params
    n = params.n_of(ell - 1)
    h = tower.height(n)
    eta = params.effective_eta
    lo, hi = centered_interval(tower, n)
    found = [c for c in maximal_crossings(x, n, lo, hi) if c.substantial]
    covered = sum(_overlap(c.start, c.stop, lo, hi) for c in found)
    bound = 1 - (x.d + 2) * eta
    return SubstantialCoverage(
        n=n,
        ell=ell,
        height=h,
        coverage=Fraction(covered, h),
        bound=bound,
        substantial=len(found),
        all_synchronized=all(c.synchronized for c in found),
        min_size=min((c.size for c in found), default=None),
        hypothesis_ok=Fraction(1, 3 ** k_of(params, ell - 1)) < eta / (2 * x.d),
    )


def twist_candidates(x: ProductPoint, n: int, lo: int, hi: int) -> list[tuple[Crossing, TwistSpec]]:
    """Unsynchronized crossings whose t_n values are exactly {1, 2}, with G0 = {i : t_n = 1}."""
    found = []
    for crossing in crossings(x, n, lo, hi):
        if set(crossing.tvec) != {1, 2}:
            continue
        g1 = frozenset(i for i, t in enumerate(crossing.tvec, start=1) if t == 2)
        found.append((crossing, TwistSpec(d=x.d, g1=g1)))
    return found
