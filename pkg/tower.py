"""
tower.py
────────
Cutting-and-stacking geometry of the nearly finite Chacon transformation.

Tower n+1 is built from three copies of tower n. At a normal stage a single
spacer sits above the middle copy. At a special stage n = n_ℓ a block of
s = h_{n−k(ℓ)} spacers sits above each copy and the single spacer sits above
the middle block:

    Sub1 | after1 (s) | Sub2 | after2 (s) | extra2 (1) | Sub3 | after3 (s)

Levels are plain Python ints and every query is O(N) arithmetic. The only
materialized tables are the heights; scans over many levels go through
:meth:`Tower.levels_array`, which works on numpy chunks.
"""

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from params import ConstructionParams, k_of, validate
from utils import ParamsError, get_logger, timer

logger = get_logger(__name__)

CHUNK = 1 << 20
INT64_LIMIT = 1 << 62

SUBCOLUMN = "subcolumn"
SPACER = "spacer"
AFTER1, AFTER2, EXTRA2, AFTER3 = "after1", "after2", "extra2", "after3"
S_BLOCKS = (AFTER1, AFTER2, AFTER3)


# ── Level classes ──────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Child:
    """A tower-(n+1) level lying in subcolumn ``t`` of tower n, at level ``level``."""
    level: int
    t: int


@dataclass(frozen=True)
class Spacer:
    """A tower-(n+1) level added at stage n, ``offset`` levels into its block."""
    position: str
    offset: int


LevelClass = Union[Child, Spacer]


@dataclass(frozen=True)
class Segment:
    kind: str
    label: str
    start: int
    length: int


@dataclass(frozen=True)
class StageLayout:
    """Ordered segments of tower n+1 in tower-(n+1) level coordinates."""
    n: int
    segments: tuple[Segment, ...]

    @property
    def total(self) -> int:
        return sum(seg.length for seg in self.segments)


@dataclass(frozen=True)
class StageInfo:
    n: int
    special: bool
    ell: Optional[int]
    k: Optional[int]
    s: int


# ── Tower ──────────────────────────────────────────────────────────────────────

class Tower:
    """
    Heights and layouts of towers 0..N for one parameter set.

    Raises:
        ParamsError: If the parameters fail validation.
    """

    def __init__(self, params: ConstructionParams) -> None:
        report = validate(params)
        if not report.accepted:
            names = ", ".join(f"{c.name}[{c.index}]" for c in report.failures)
            raise ParamsError(f"invalid construction parameters: {names}")
        self.params = params
        self.N = params.trunc

        self._h: list[int] = [1]
        self._s: list[int] = []
        self._info: list[StageInfo] = []
        for n in range(self.N):
            ell = params.ell_of_stage(n)
            if ell is None:
                info = StageInfo(n=n, special=False, ell=None, k=None, s=0)
            else:
                k = k_of(params, ell)
                info = StageInfo(n=n, special=True, ell=ell, k=k, s=self._h[n - k])
            self._info.append(info)
            self._s.append(info.s)
            self._h.append(3 * self._h[n] + 3 * info.s + 1)
        logger.debug("Built tower heights up to N=%d (h_N=%d)", self.N, self._h[-1])

    # ── Heights ────────────────────────────────────────────────────────────

    @property
    def heights(self) -> tuple[int, ...]:
        return tuple(self._h)

    def _check_stage(self, n: int, top: Optional[int] = None) -> None:
        top = self.N if top is None else top
        if not 0 <= n <= top:
            raise ValueError(f"stage {n} out of range [0, {top}]")

    def height(self, n: int) -> int:
        self._check_stage(n)
        return self._h[n]

    def stage_info(self, n: int) -> StageInfo:
        self._check_stage(n, self.N - 1)
        return self._info[n]

    def measure_of_tower(self, n: int) -> Fraction:
        """μ(C_n) = h_n · 3^{-n}."""
        self._check_stage(n)
        return Fraction(self._h[n], 3 ** n)

    # ── Layout ─────────────────────────────────────────────────────────────

    def offset(self, n: int, t: int) -> int:
        """Start of subcolumn ``t`` of stage n inside tower n+1."""
        h, s = self._h[n], self._s[n]
        if t == 1:
            return 0
        if t == 2:
            return h + s
        if t == 3:
            return 2 * (h + s) + 1
        raise ValueError(f"subcolumn index must be 1, 2 or 3, got {t}")

    def layout(self, n: int) -> StageLayout:
        self._check_stage(n, self.N - 1)
        h, s = self._h[n], self._s[n]
        parts: list[tuple[str, str, int]] = [(SUBCOLUMN, "1", h)]
        if s:
            parts.append((SPACER, AFTER1, s))
        parts.append((SUBCOLUMN, "2", h))
        if s:
            parts.append((SPACER, AFTER2, s))
        parts.append((SPACER, EXTRA2, 1))
        parts.append((SUBCOLUMN, "3", h))
        if s:
            parts.append((SPACER, AFTER3, s))
        segments, start = [], 0
        for kind, label, length in parts:
            segments.append(Segment(kind=kind, label=label, start=start, length=length))
            start += length
        return StageLayout(n=n, segments=tuple(segments))

    def project(self, n: int, j: int) -> LevelClass:
        """
        The map p_n refined with spacer identity: where level j of tower n+1
        sits relative to tower n.
        """
        self._check_stage(n, self.N - 1)
        h, s = self._h[n], self._s[n]
        if not 0 <= j < self._h[n + 1]:
            raise ValueError(f"level {j} out of range for tower {n + 1}")
        if j < h:
            return Child(j, 1)
        if j < h + s:
            return Spacer(AFTER1, j - h)
        if j < 2 * h + s:
            return Child(j - h - s, 2)
        if j < 2 * h + 2 * s:
            return Spacer(AFTER2, j - 2 * h - s)
        if j == 2 * h + 2 * s:
            return Spacer(EXTRA2, 0)
        if j < 3 * h + 2 * s + 1:
            return Child(j - 2 * h - 2 * s - 1, 3)
        return Spacer(AFTER3, j - 3 * h - 2 * s - 1)

    # ── Digit decomposition ────────────────────────────────────────────────

    def decompose(self, N: int, j: int, n_lo: int = 0) -> list[tuple[int, Optional[LevelClass]]]:
        """
        Walk level j of tower N down to stage ``n_lo``.

        Returns (m, class) for m = N−1 .. n_lo. After the first Spacer every
        lower stage is reported as None (outside).
        """
        self._check_stage(N)
        self._check_stage(n_lo, N)
        if not 0 <= j < self._h[N]:
            raise ValueError(f"level {j} out of range for tower {N}")
        chain: list[tuple[int, Optional[LevelClass]]] = []
        current: Optional[int] = j
        for m in range(N - 1, n_lo - 1, -1):
            if current is None:
                chain.append((m, None))
                continue
            cls = self.project(m, current)
            chain.append((m, cls))
            current = cls.level if isinstance(cls, Child) else None
        return chain

    def level_and_t(self, N: int, j: int, n: int) -> tuple[Optional[int], Optional[int]]:
        """(j_n, t_n) of level j of tower N; None where undefined."""
        self._check_stage(N)
        self._check_stage(n, N)
        if not 0 <= j < self._h[N]:
            raise ValueError(f"level {j} out of range for tower {N}")
        t: Optional[int] = None
        for m in range(N - 1, n - 1, -1):
            h, s = self._h[m], self._s[m]
            if j < h:
                t = 1
            elif h + s <= j < 2 * h + s:
                j, t = j - h - s, 2
            elif 2 * h + 2 * s + 1 <= j < 3 * h + 2 * s + 1:
                j, t = j - 2 * h - 2 * s - 1, 3
            else:
                return None, None
        return j, t

    def embed(self, n: int, j: int, digits: Sequence[int]) -> int:
        """Level in tower n+len(digits) of level j of tower n with subcolumns t_n, t_{n+1}, ..."""
        self._check_stage(n)
        self._check_stage(n + len(digits))
        if not 0 <= j < self._h[n]:
            raise ValueError(f"level {j} out of range for tower {n}")
        for m, t in enumerate(digits, start=n):
            j += self.offset(m, t)
        return j

    def occurrence_index(self, n: int, N: int, j: int) -> Optional[int]:
        """Rank of the occurrence of tower n holding level j of tower N (ternary digits t−1)."""
        digits: list[int] = []
        for _, cls in self.decompose(N, j, n):
            if not isinstance(cls, Child):
                return None
            digits.append(cls.t)
        # decompose lists t_{N-1} first, which is the most significant digit
        return ternary_rank(digits)

    def occurrence_starts(self, n: int, m: int) -> np.ndarray:
        """Sorted start levels of the 3^{m−n} occurrences of tower n inside tower m."""
        self._check_stage(m)
        self._check_stage(n, m)
        if 3 ** (m - n) > CHUNK * 16:
            raise ValueError(f"3^{m - n} occurrences is too many to list")
        starts = np.zeros(1, dtype=np.int64)
        for stage in range(n, m):
            starts = np.concatenate([starts + self.offset(stage, t) for t in (1, 2, 3)])
        return starts

    # ── Vectorized decomposition ───────────────────────────────────────────

    def levels_array(self, n: int, N: int, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        (j_n, t_n) for an array of tower-N levels.

        Outside points get level −1; t is 0 where undefined (outside or n = N).
        """
        self._check_stage(N)
        self._check_stage(n, N)
        if self._h[N] >= INT64_LIMIT:
            raise ValueError(f"h_{N} does not fit the vectorized path")
        j = np.asarray(idx, dtype=np.int64)
        if j.size and (j.min() < 0 or j.max() >= self._h[N]):
            raise ValueError(f"levels out of range for tower {N}")
        alive = np.ones(j.shape, dtype=bool)
        t = np.zeros(j.shape, dtype=np.int8)
        for m in range(N - 1, n - 1, -1):
            h, s = self._h[m], self._s[m]
            in1 = j < h
            in2 = (j >= h + s) & (j < 2 * h + s)
            lo3 = 2 * h + 2 * s + 1
            in3 = (j >= lo3) & (j < lo3 + h)
            alive &= in1 | in2 | in3
            j = np.where(in1, j, np.where(in2, j - (h + s), j - lo3))
            if m == n:
                t = np.where(in1, 1, np.where(in2, 2, 3)).astype(np.int8)
        levels = np.where(alive, j, -1)
        t = np.where(alive, t, 0).astype(np.int8)
        return levels, t

    @timer
    def level_census(self, n: int, N: int) -> np.ndarray:
        """Number of tower-N levels inside each level L_n^j, as an array of length h_n."""
        self._check_stage(N)
        self._check_stage(n, N)
        counts = np.zeros(self._h[n], dtype=np.int64)
        for lo in range(0, self._h[N], CHUNK):
            hi = min(lo + CHUNK, self._h[N])
            levels, _ = self.levels_array(n, N, np.arange(lo, hi, dtype=np.int64))
            counts += np.bincount(levels[levels >= 0], minlength=self._h[n])
        return counts

    # ── Fake tower ─────────────────────────────────────────────────────────

    def fake_stage(self, ell: int) -> int:
        """n′ = n_ℓ − k(ℓ): the tower copied by each spacer block of stage n_ℓ."""
        return self.params.n_of(ell) - k_of(self.params, ell)

    def fake_level(self, ell: int, j: int) -> Optional[tuple[str, int]]:
        """
        For level j of tower n_ℓ+1: the spacer block and the fake level inside
        it, or None outside the three s-blocks.
        """
        cls = self.project(self.params.n_of(ell), j)
        if isinstance(cls, Spacer) and cls.position in S_BLOCKS:
            return cls.position, cls.offset
        return None

    def extended_level_and_t(self, ell: int, j: int, n: int) -> tuple[Optional[int], Optional[int]]:
        """
        (j̄_n, t̄_n) of level j of tower n_ℓ+1: real levels decompose as usual,
        fake ones decompose inside the fake tower n′. Valid for n ≤ n′.
        """
        n_ell = self.params.n_of(ell)
        n_fake = self.fake_stage(ell)
        if n > n_fake:
            raise ValueError(f"stage {n} is above the fake tower {n_fake}")
        cls = self.project(n_ell, j)
        if isinstance(cls, Child):
            if n == n_ell:
                return cls.level, cls.t
            return self.level_and_t(n_ell, cls.level, n)
        if cls.position not in S_BLOCKS:
            return None, None
        if n == n_fake:
            return cls.offset, None
        return self.level_and_t(n_fake, cls.offset, n)

    def extended_level(self, ell: int, j: int, n: int) -> Optional[int]:
        return self.extended_level_and_t(ell, j, n)[0]

    def extended_subcolumn(self, ell: int, j: int, n: int) -> Optional[int]:
        return self.extended_level_and_t(ell, j, n)[1]


@lru_cache(maxsize=32)
def build_tower(params: ConstructionParams) -> Tower:
    """Cached :class:`Tower` for a parameter set."""
    return Tower(params)


def ternary_rank(digits: Iterable[int]) -> int:
    """Rank with the first digit most significant; digits in {1, 2, 3}."""
    rank = 0
    for t in digits:
        rank = 3 * rank + (t - 1)
    return rank
