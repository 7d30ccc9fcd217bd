"""
hierarchy.py
────────────
Hierarchy of subsets of ℤ described by hole/piece sizes.

F is of order 1 inside I when every hole of F ∩ I has size ≤ s_1 and two
consecutive holes are separated by a piece of size ≥ c_1. F is of order ℓ
when some F′ ⊇ F satisfies the same clauses with (c_ℓ, s_ℓ) and F is of
order ℓ − 1 inside every piece of F′ ∩ I. The existential F′ is supplied as
an explicit witness; orbits supply the canonical one (visits to an
intermediate tower).

Sets are sorted ``numpy`` integer arrays.
"""

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from crossings import visit_set
from dynamics import Point, ProductPoint, climbs_into
from params import k_of
from tower import Tower
from utils import HypothesisError, get_logger

logger = get_logger(__name__)

PIECE = "piece"
HOLE = "hole"
GENERATOR_MODES = ("random", "none", "maximal")


# ── Types ──────────────────────────────────────────────────────────────────────

class OrderParams(BaseModel):
    """Size sequences (c_m), (s_m) together with the η and d they are read against."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    c: tuple[int, ...] = Field(description="Minimal inter-hole piece sizes c_1, c_2, ...")
    s: tuple[int, ...] = Field(description="Maximal hole sizes s_1, s_2, ...")
    eta: Fraction = Field(description="Abstract smallness parameter, 0 < eta < 1")
    d: int = Field(default=1, ge=1)

    @field_validator("eta", mode="before")
    @classmethod
    def _parse_eta(cls, value: Any) -> Fraction:
        if isinstance(value, Fraction):
            return value
        return Fraction(str(value).strip())

    @model_validator(mode="after")
    def _check_sizes(self) -> "OrderParams":
        if len(self.c) != len(self.s) or not self.c:
            raise ValueError("c and s must be nonempty and of equal length")
        if min(self.c) < 1 or min(self.s) < 1:
            raise ValueError("c and s must be positive integers")
        if not 0 < self.eta < 1:
            raise ValueError(f"eta must lie in (0, 1), got {self.eta}")
        return self

    @property
    def depth(self) -> int:
        return len(self.c)

    @property
    def K1(self) -> Fraction:
        return (1 + 2 / self.eta) / (1 - self.eta) * self.d


@dataclass(frozen=True)
class Run:
    kind: str
    start: int
    stop: int

    @property
    def size(self) -> int:
        return self.stop - self.start + 1


@dataclass(frozen=True)
class OrderWitness:
    """The coarser set F′ used at recursion level ``level``."""
    level: int
    members: np.ndarray


@dataclass(frozen=True)
class OrderFailure:
    level: int
    interval: tuple[int, int]
    reason: str
    run: Optional[Run] = None


@dataclass(frozen=True)
class OrderCheck:
    passed: bool
    failure: Optional[OrderFailure] = None

    def __bool__(self) -> bool:
        return self.passed


# ── Pieces and holes ───────────────────────────────────────────────────────────

def _indicator(F: np.ndarray, lo: int, hi: int) -> np.ndarray:
    inside = np.zeros(hi - lo + 1, dtype=bool)
    members = np.asarray(F, dtype=np.int64)
    members = members[(members >= lo) & (members <= hi)]
    inside[members - lo] = True
    return inside


def pieces_and_holes(F: np.ndarray, lo: int, hi: int) -> list[Run]:
    """Alternating maximal runs of F ∩ I (pieces) and I ∖ F (holes) tiling I = [lo, hi]."""
    if hi < lo:
        return []
    inside = _indicator(F, lo, hi)
    cuts = np.flatnonzero(np.diff(inside.astype(np.int8))) + 1
    bounds = np.concatenate([[0], cuts, [inside.size]])
    return [
        Run(PIECE if inside[a] else HOLE, lo + int(a), lo + int(b) - 1)
        for a, b in zip(bounds[:-1], bounds[1:])
    ]


def _clause_failure(runs: list[Run], c: int, s: int) -> Optional[tuple[str, Run]]:
    for run in runs:
        if run.kind == HOLE and run.size > s:
            return f"hole of size {run.size} exceeds s = {s}", run
    for i in range(1, len(runs) - 1):
        run = runs[i]
        if run.kind == PIECE and run.size < c:
            return f"piece of size {run.size} between two holes is below c = {c}", run
    return None


# ── Order checks ───────────────────────────────────────────────────────────────

def _witness_map(witnesses: Sequence[OrderWitness]) -> dict[int, np.ndarray]:
    return {w.level: np.asarray(w.members, dtype=np.int64) for w in witnesses}


def _check(F: np.ndarray, lo: int, hi: int, ell: int, params: OrderParams,
           witnesses: dict[int, np.ndarray]) -> OrderCheck:
    if ell == 1:
        coarse = F
    else:
        if ell not in witnesses:
            raise ValueError(f"no witness supplied for level {ell}")
        coarse = witnesses[ell]
        inner = F[(F >= lo) & (F <= hi)]
        if not np.isin(inner, coarse).all():
            raise ValueError(f"witness at level {ell} does not contain F inside [{lo}, {hi}]")
    runs = pieces_and_holes(coarse, lo, hi)
    failed = _clause_failure(runs, params.c[ell - 1], params.s[ell - 1])
    if failed is not None:
        reason, run = failed
        return OrderCheck(False, OrderFailure(level=ell, interval=(lo, hi), reason=reason, run=run))
    if ell > 1:
        for run in runs:
            if run.kind != PIECE:
                continue
            sub = _check(F, run.start, run.stop, ell - 1, params, witnesses)
            if not sub:
                return sub
    return OrderCheck(True)


def check_order(F: np.ndarray, lo: int, hi: int, ell: int, params: OrderParams,
                witnesses: Sequence[OrderWitness] = ()) -> OrderCheck:
    """
    Whether F is of order ℓ inside [lo, hi] with the given witnesses (levels 2..ℓ).

    Returns an :class:`OrderCheck` carrying the first failing clause.

    Raises:
        ValueError: If ℓ exceeds the parameter depth, a witness is missing, or a
            witness does not contain F.
    """
    if not 1 <= ell <= params.depth:
        raise ValueError(f"ℓ must lie in [1, {params.depth}], got {ell}")
    result = _check(np.asarray(F, dtype=np.int64), lo, hi, ell, params, _witness_map(witnesses))
    if not result:
        logger.debug("Order-%d check failed: %s", ell, result.failure)
    return result


# ── Orbit-derived families ─────────────────────────────────────────────────────

def orbit_set(p: Point, n: int, lo: int, hi: int) -> np.ndarray:
    """Shifts j in [lo, hi] with T^j p ∈ C_n."""
    return visit_set(ProductPoint((p,)), n, lo, hi)


def witnesses_from_orbit(p: Point, ell_base: int, ell: int, lo: int, hi: int) -> list[OrderWitness]:
    """
    Witness at level m = visits to C_{n_{ℓ̄+m−1}}, for m = 2..ℓ.

    Raises:
        HypothesisError: If the coordinate does not climb into tower n_{ℓ̄+ℓ} along [lo, hi].
    """
    params = p.tower.params
    n_top = params.n_of(ell_base + ell)
    if n_top > p.trunc or not climbs_into(p, n_top, lo, hi):
        raise HypothesisError(f"point does not climb into tower {n_top} along [{lo}, {hi}]")
    return [
        OrderWitness(level=m, members=orbit_set(p, params.n_of(ell_base + m - 1), lo, hi))
        for m in range(2, ell + 1)
    ]


def orbit_order_params(tower: Tower, ell_base: int, ell: int, eta: Fraction, d: int = 1) -> OrderParams:
    """c_m = h_{n_{ℓ̄+m−1}} and s_m = h_{n_{ℓ̄+m−1} − k(ℓ̄+m−1)} + 1 for m = 1..ℓ."""
    params = tower.params
    c, s = [], []
    for m in range(1, ell + 1):
        idx = ell_base + m - 1
        n = params.n_of(idx)
        c.append(tower.height(n))
        s.append(tower.height(n - k_of(params, idx)) + 1)
    return OrderParams(c=tuple(c), s=tuple(s), eta=eta, d=d)


# ── Lemma bounds ───────────────────────────────────────────────────────────────

class CsCondition(BaseModel):
    m: int
    cond1: bool = Field(description="s_m/c_m < η²/((η+1)·d)")
    cond2: Optional[bool] = Field(default=None, description="c_m/c_{m+1} < η/K1; None for the last level")


def cs_conditions(params: OrderParams) -> list[CsCondition]:
    eta, d = params.eta, params.d
    rows = []
    for m in range(1, params.depth + 1):
        cond1 = Fraction(params.s[m - 1], params.c[m - 1]) < eta * eta / ((eta + 1) * d)
        cond2 = None
        if m < params.depth:
            cond2 = Fraction(params.c[m - 1], params.c[m]) < eta / params.K1
        rows.append(CsCondition(m=m, cond1=cond1, cond2=cond2))
    return rows


class LemmaBounds(BaseModel):
    """Density of ⋂F_i in I and the mass of its small pieces against their bounds."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    ell: int
    c: int
    length: int
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


def small_piece_bound(params: OrderParams, ell: int, c: int) -> Fraction:
    """K1·(c/c_1 + Σ_{m=1}^{ℓ−1} (c_m/c_{m+1}) / (1−η)^{2m+2})."""
    total = Fraction(c, params.c[0])
    for m in range(1, ell):
        total += Fraction(params.c[m - 1], params.c[m]) / (1 - params.eta) ** (2 * m + 2)
    return params.K1 * total


def check_lemma_bounds(sets: Sequence[np.ndarray], lo: int, hi: int, ell: int,
                       params: OrderParams, c: int,
                       witnesses: Optional[Sequence[Sequence[OrderWitness]]] = None) -> LemmaBounds:
    """
    Exact density and small-piece proportion of F = ⋂F_i inside [lo, hi].

    When ``witnesses`` are given, the order-ℓ certification of every F_i is
    recorded as a hypothesis flag.

    Raises:
        ValueError: If no set is given, c < 1, or ℓ exceeds the parameter depth.
    """
    if not sets:
        raise ValueError("at least one set is required")
    if c < 1:
        raise ValueError(f"c must be >= 1, got {c}")
    if not 1 <= ell <= params.depth:
        raise ValueError(f"ℓ must lie in [1, {params.depth}], got {ell}")
    length = hi - lo + 1
    inside = np.ones(length, dtype=bool)
    for F in sets:
        inside &= _indicator(F, lo, hi)
    visits = int(inside.sum())
    small = sum(
        run.size for run in pieces_and_holes(lo + np.flatnonzero(inside), lo, hi)
        if run.kind == PIECE and run.size <= c
    )
    hypotheses = {"length": length >= params.eta * params.c[ell - 1]}
    for row in cs_conditions(params)[:ell]:
        hypotheses[f"cs_cond1[{row.m}]"] = row.cond1
        if row.cond2 is not None and row.m < ell:
            hypotheses[f"cs_cond2[{row.m}]"] = row.cond2
    if witnesses is not None:
        hypotheses["order"] = all(
            check_order(F, lo, hi, ell, params, w).passed for F, w in zip(sets, witnesses)
        )
    return LemmaBounds(
        ell=ell,
        c=c,
        length=length,
        density=Fraction(visits, length),
        density_bound=(1 - params.eta) ** (2 * ell),
        small_proportion=Fraction(small, visits) if visits else Fraction(0),
        proportion_bound=small_piece_bound(params, ell, c),
        hypotheses=hypotheses,
    )


# ── Synthetic instances ────────────────────────────────────────────────────────

def _place_holes(lo: int, hi: int, c: int, s: int, rng: random.Random, mode: str) -> list[tuple[int, int]]:
    """Holes inside [lo, hi] with sizes ≤ s and inter-hole pieces ≥ c."""
    if mode == "none":
        return []
    holes = []
    pos = lo + (0 if mode == "maximal" else rng.randint(0, c))
    while True:
        size = s if mode == "maximal" else rng.randint(1, s)
        if pos + size - 1 > hi:
            break
        holes.append((pos, pos + size - 1))
        pos += size + (c if mode == "maximal" else rng.randint(c, 2 * c))
    return holes


def random_order_instance(ell: int, params: OrderParams, lo: int, hi: int,
                          rng: random.Random, mode: str = "random") -> tuple[np.ndarray, list[OrderWitness]]:
    """
    A set F of order ℓ inside [lo, hi] and its witnesses, built top-down:
    holes of level m are cut inside the pieces left by level m + 1.

    ``mode`` is "random", "none" (no holes, F = I) or "maximal" (holes of size
    s_m separated by pieces of size exactly c_m).
    """
    if mode not in GENERATOR_MODES:
        raise ValueError(f"mode must be one of {GENERATOR_MODES}, got {mode!r}")
    if not 1 <= ell <= params.depth:
        raise ValueError(f"ℓ must lie in [1, {params.depth}], got {ell}")
    current = np.ones(hi - lo + 1, dtype=bool)
    witnesses: list[OrderWitness] = []
    for m in range(ell, 0, -1):
        pieces = [r for r in pieces_and_holes(lo + np.flatnonzero(current), lo, hi) if r.kind == PIECE]
        refined = current.copy()
        for piece in pieces:
            for a, b in _place_holes(piece.start, piece.stop, params.c[m - 1], params.s[m - 1], rng, mode):
                refined[a - lo:b - lo + 1] = False
        if m > 1:
            witnesses.append(OrderWitness(level=m, members=lo + np.flatnonzero(refined)))
        current = refined
    return lo + np.flatnonzero(current), sorted(witnesses, key=lambda w: w.level)
