"""
dynamics.py
───────────
Points of X and X^d at a finite truncation, the transformation T and its
Cartesian powers, twisting transformations, and the orbit scan primitive.

A point of tower N is its level index; all j_n and t_n are derived through
the tower. Inside tower N, T is the level successor, so any orbit segment that
never needs an index outside [0, h_N) agrees with the infinite system.
"""

import random
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from tower import Tower
from utils import OutOfTruncationError, get_logger

logger = get_logger(__name__)

XINFTY_MARGIN = 100


# ── Value types ────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Point:
    """A level index of tower ``trunc``."""
    tower: Tower = field(compare=False, repr=False)
    trunc: int
    idx: int

    def __post_init__(self) -> None:
        if not 0 <= self.trunc <= self.tower.N:
            raise ValueError(f"truncation {self.trunc} exceeds built stage {self.tower.N}")
        if not 0 <= self.idx < self.tower.height(self.trunc):
            raise ValueError(f"idx {self.idx} out of range for tower {self.trunc}")


@dataclass(frozen=True)
class TopOfTruncation:
    """Returned by :func:`step` at the top level of tower N."""
    trunc: int


@dataclass(frozen=True)
class OutOfTruncation:
    """Returned when an iterate leaves [0, h_N); ``overshoot`` is signed."""
    trunc: int
    overshoot: int


@dataclass(frozen=True)
class ProductPoint:
    """d points sharing one truncation."""
    coords: tuple[Point, ...]

    def __post_init__(self) -> None:
        if not self.coords:
            raise ValueError("a product point needs at least one coordinate")
        truncs = {p.trunc for p in self.coords}
        if len(truncs) != 1:
            raise ValueError(f"coordinates use different truncations: {sorted(truncs)}")

    @property
    def d(self) -> int:
        return len(self.coords)

    @property
    def trunc(self) -> int:
        return self.coords[0].trunc

    @property
    def tower(self) -> Tower:
        return self.coords[0].tower

    @property
    def idx(self) -> tuple[int, ...]:
        return tuple(p.idx for p in self.coords)


@dataclass(frozen=True)
class TwistSpec:
    """Partition {1..d} = G0 ⊔ G1; the twist applies T on G1 only."""
    d: int
    g1: frozenset[int]
    g0: frozenset[int] = frozenset()

    def __post_init__(self) -> None:
        everything = frozenset(range(1, self.d + 1))
        g0 = self.g0 or everything - self.g1
        object.__setattr__(self, "g0", g0)
        if self.g0 & self.g1 or self.g0 | self.g1 != everything:
            raise ValueError(f"G0={sorted(self.g0)} and G1={sorted(self.g1)} do not partition 1..{self.d}")
        if not self.g0 or not self.g1:
            raise ValueError("both G0 and G1 must be nonempty")

    def swapped(self) -> "TwistSpec":
        return TwistSpec(d=self.d, g1=self.g0, g0=self.g1)


@dataclass(frozen=True)
class XinftyCheck:
    ok: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.ok


@dataclass(frozen=True)
class AllMiddle:
    """Extend with t = 2 at every new stage."""


@dataclass(frozen=True)
class Digits:
    digits: tuple[int, ...]


@dataclass(frozen=True)
class RandomDigits:
    seed: int


Extension = Union[AllMiddle, Digits, RandomDigits]


# ── Single points ──────────────────────────────────────────────────────────────

def make_point(tower: Tower, N: int, idx: int) -> Point:
    return Point(tower=tower, trunc=N, idx=idx)


def step(p: Point) -> Union[Point, TopOfTruncation]:
    if p.idx == p.tower.height(p.trunc) - 1:
        return TopOfTruncation(p.trunc)
    return Point(tower=p.tower, trunc=p.trunc, idx=p.idx + 1)


def iterate(p: Point, k: int) -> Union[Point, OutOfTruncation]:
    """T^k p; the bottom point has no preimage, so negative k may also overshoot."""
    target = p.idx + k
    top = p.tower.height(p.trunc) - 1
    if target < 0:
        return OutOfTruncation(p.trunc, target)
    if target > top:
        return OutOfTruncation(p.trunc, target - top)
    return Point(tower=p.tower, trunc=p.trunc, idx=target)


def level(p: Point, n: int) -> Optional[int]:
    """j_n(p), or None outside C_n."""
    return p.tower.level_and_t(p.trunc, p.idx, n)[0]


def subcolumn(p: Point, n: int) -> Optional[int]:
    """t_n(p); undefined outside C_n and at n = N."""
    if n >= p.trunc:
        return None
    return p.tower.level_and_t(p.trunc, p.idx, n)[1]


def extension_digits(extension: Extension, count: int) -> list[int]:
    if isinstance(extension, AllMiddle):
        return [2] * count
    if isinstance(extension, Digits):
        if len(extension.digits) != count:
            raise ValueError(f"expected {count} digits, got {len(extension.digits)}")
        return list(extension.digits)
    rng = random.Random(extension.seed)
    return [rng.randint(1, 3) for _ in range(count)]


def lift(p: Point, new_trunc: int, extension: Extension = AllMiddle()) -> Point:
    """The same point viewed in a deeper tower, choosing the new digits."""
    if new_trunc < p.trunc:
        raise ValueError(f"cannot lift from {p.trunc} down to {new_trunc}")
    digits = extension_digits(extension, new_trunc - p.trunc)
    return Point(tower=p.tower, trunc=new_trunc, idx=p.tower.embed(p.trunc, p.idx, digits))


def random_point(tower: Tower, N: int, rng: random.Random) -> Point:
    """Uniform over the levels of tower N (normalized μ on C_N)."""
    return Point(tower=tower, trunc=N, idx=rng.randrange(tower.height(N)))


def deep_point(tower: Tower, N: int, depth: int, rng: random.Random) -> Point:
    """Uniform level of tower ``depth`` lifted to N through middle subcolumns."""
    return lift(random_point(tower, depth, rng), N, AllMiddle())


def xinfty_window_ok(p: Point, ell_range: Iterable[int], margin: int = XINFTY_MARGIN) -> XinftyCheck:
    """
    For every ℓ and n_{ℓ−1} ≤ n ≤ n_ℓ − ℓ, the occurrence of tower n inside
    tower n_ℓ holding p is neither among the first nor the last ``margin``.
    """
    params = p.tower.params
    for ell in ell_range:
        n_prev, n_ell = params.n_of(ell - 1), params.n_of(ell)
        if n_ell > p.trunc:
            return XinftyCheck(False, f"truncation {p.trunc} below n_{ell} = {n_ell}")
        if level(p, n_prev) is None:
            return XinftyCheck(False, f"point outside C_{n_prev}")
        j_top = p.tower.level_and_t(p.trunc, p.idx, n_ell)[0]
        for n in range(n_prev, n_ell - ell + 1):
            rank = p.tower.occurrence_index(n, n_ell, j_top)
            count = 3 ** (n_ell - n)
            if rank is None or not margin <= rank <= count - margin:
                return XinftyCheck(False, f"occurrence {rank} of tower {n} in tower {n_ell} is within {margin} of an end")
    return XinftyCheck(True)


def return_time_check(p: Point, ell: int) -> Optional[bool]:
    """
    After h_{n_ℓ+1} steps a point deep in C_{n_ℓ+1} is in the same level or
    the one below. None when the point does not meet the hypotheses (outside,
    bottom level, last occurrence inside tower n_{ℓ+1}).
    """
    tower, params = p.tower, p.tower.params
    m = params.n_of(ell) + 1
    upper = params.n_of(ell + 1)
    if p.trunc < upper:
        return None
    j = level(p, m)
    if j is None or j == 0:
        return None
    j_upper = tower.level_and_t(p.trunc, p.idx, upper)[0]
    rank = tower.occurrence_index(m, upper, j_upper)
    if rank is None or rank == 3 ** (upper - m) - 1:
        return None
    q = iterate(p, tower.height(m))
    if not isinstance(q, Point):
        return None
    return level(q, m) in (j, j - 1)


def climbs_into(p: Point, n: int, lo: int, hi: int) -> bool:
    """T^j p stays in one passage through tower n for lo ≤ j ≤ hi."""
    start = iterate(p, lo)
    if not isinstance(start, Point) or not isinstance(iterate(p, hi), Point):
        return False
    j = level(start, n)
    return j is not None and j + (hi - lo) <= p.tower.height(n) - 1


# ── Product points ─────────────────────────────────────────────────────────────

def make_product(tower: Tower, N: int, idx: Sequence[int]) -> ProductPoint:
    return ProductPoint(tuple(make_point(tower, N, i) for i in idx))


def iterate_product(x: ProductPoint, k: int) -> Union[ProductPoint, OutOfTruncation]:
    moved = []
    for p in x.coords:
        q = iterate(p, k)
        if isinstance(q, OutOfTruncation):
            return q
        moved.append(q)
    return ProductPoint(tuple(moved))


def step_product(x: ProductPoint) -> Union[ProductPoint, OutOfTruncation]:
    return iterate_product(x, 1)


def twist(x: ProductPoint, spec: TwistSpec) -> Union[ProductPoint, TopOfTruncation]:
    """Apply T on the coordinates of G1 (1-based), identity on G0."""
    if spec.d != x.d:
        raise ValueError(f"twist is for d={spec.d}, point has d={x.d}")
    moved = []
    for i, p in enumerate(x.coords, start=1):
        if i in spec.g1:
            q = step(p)
            if isinstance(q, TopOfTruncation):
                return q
            moved.append(q)
        else:
            moved.append(p)
    return ProductPoint(tuple(moved))


def detect_offset(x1: Point, x2: Point) -> Optional[int]:
    """e with x2 = T^e x1 inside the truncation, or None for mismatched truncations."""
    if x1.trunc != x2.trunc:
        return None
    return x2.idx - x1.idx


# ── Orbit scans ────────────────────────────────────────────────────────────────

def valid_window(x: ProductPoint) -> tuple[int, int]:
    """Largest [a, b] with every coordinate of (T^{×d})^j x inside tower N."""
    top = x.tower.height(x.trunc) - 1
    return -min(x.idx), top - max(x.idx)


def check_window(x: ProductPoint, lo: int, hi: int) -> None:
    """
    Raises:
        ValueError: If the window is empty.
        OutOfTruncationError: If the window leaves the truncation tower.
    """
    if hi < lo:
        raise ValueError(f"empty window [{lo}, {hi}]")
    a, b = valid_window(x)
    if lo < a or hi > b:
        raise OutOfTruncationError(
            f"window [{lo}, {hi}] leaves tower {x.trunc}; largest valid window is [{a}, {b}]",
            valid_window=(a, b),
        )


def orbit_levels(x: ProductPoint, n: int, lo: int, hi: int) -> tuple[np.ndarray, np.ndarray]:
    """
    Levels and subcolumns of every coordinate along j = lo..hi.

    Returns arrays of shape (d, hi − lo + 1); level −1 is outside C_n and
    subcolumn 0 is undefined.
    """
    check_window(x, lo, hi)
    offsets = np.arange(lo, hi + 1, dtype=np.int64)
    levels = np.empty((x.d, offsets.size), dtype=np.int64)
    tvals = np.empty((x.d, offsets.size), dtype=np.int8)
    for i, p in enumerate(x.coords):
        levels[i], tvals[i] = x.tower.levels_array(n, x.trunc, p.idx + offsets)
    return levels, tvals
