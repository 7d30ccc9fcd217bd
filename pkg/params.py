"""
params.py
─────────
Construction parameters of the nearly finite Chacon transformation and every
constant derived from (d, eta).

The whole construction is a pure function of :class:`ConstructionParams`.
All conditions are evaluated with ``Fraction`` and Python ints.
"""

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator

from utils import ParamsError, get_logger

logger = get_logger(__name__)

DEFAULT_N_SEQ: tuple[int, ...] = (3, 8, 15, 24, 35)
DEFAULT_L_SEQ: tuple[int, ...] = (1, 2, 8, 44)
DEFAULT_TRUNC = 12


# ── Parameters ─────────────────────────────────────────────────────────────────

class ConstructionParams(BaseModel):
    """Sequences (n_ℓ), (ℓ_k), truncation depth, dimension and eta."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    n_seq: tuple[int, ...] = Field(default=DEFAULT_N_SEQ, description="Special stages n_1 < n_2 < ...")
    l_seq: tuple[int, ...] = Field(default=DEFAULT_L_SEQ, description="Thresholds ℓ_0 = 1 < ℓ_1 < ...")
    trunc: int = Field(default=DEFAULT_TRUNC, ge=0, description="Largest tower built (N)")
    d: int = Field(default=1, ge=1, description="Dimension of the Cartesian power")
    eta: Optional[Fraction] = Field(default=None, description="Smallness parameter; None selects 1/(128 d)")

    @field_validator("eta", mode="before")
    @classmethod
    def _parse_eta(cls, value: Any) -> Optional[Fraction]:
        if value is None or value == "default":
            return None
        if isinstance(value, Fraction):
            return value
        if isinstance(value, (str, float)):
            return Fraction(str(value).strip())
        return Fraction(value)

    @field_serializer("eta")
    def _dump_eta(self, value: Optional[Fraction]) -> Optional[str]:
        return None if value is None else f"{value.numerator}/{value.denominator}"

    @property
    def effective_eta(self) -> Fraction:
        return self.eta if self.eta is not None else Fraction(1, 128 * self.d)

    def n_of(self, ell: int) -> int:
        """n_ℓ, with the convention n_0 = 0."""
        if ell == 0:
            return 0
        if not 1 <= ell <= len(self.n_seq):
            raise ParamsError(f"n_seq has no entry for ℓ={ell}")
        return self.n_seq[ell - 1]

    def ell_of_stage(self, n: int) -> Optional[int]:
        """The ℓ with n = n_ℓ, or None for a normal stage."""
        pos = bisect.bisect_left(self.n_seq, n)
        if pos < len(self.n_seq) and self.n_seq[pos] == n:
            return pos + 1
        return None


class ConditionCheck(BaseModel):
    """One line of a validation report."""
    name: str = Field(description="Condition name")
    index: Optional[int] = Field(default=None, description="ℓ or k the condition is about")
    passed: bool = Field(description="Whether the condition holds")
    detail: str = Field(default="", description="Exact values compared")


class ValidationReport(BaseModel):
    """All conditions checked by :func:`validate`."""
    checks: list[ConditionCheck] = Field(default_factory=list)

    @property
    def accepted(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failures(self) -> list[ConditionCheck]:
        return [c for c in self.checks if not c.passed]


# ── Validation ─────────────────────────────────────────────────────────────────

def _strictly_increasing(seq: tuple[int, ...]) -> Optional[int]:
    for i in range(1, len(seq)):
        if seq[i] <= seq[i - 1]:
            return i
    return None


def validate(params: ConstructionParams) -> ValidationReport:
    """
    Check every structural and growth condition on the parameters.

    Raises:
        ParamsError: If either sequence is empty ("no stages").
    """
    if not params.n_seq or not params.l_seq:
        raise ParamsError("no stages")

    checks: list[ConditionCheck] = []
    n_seq, l_seq = params.n_seq, params.l_seq

    checks.append(ConditionCheck(name="l_seq_start", index=0, passed=l_seq[0] == 1, detail=f"ℓ_0 = {l_seq[0]}"))
    bad = _strictly_increasing(n_seq)
    checks.append(ConditionCheck(
        name="n_seq_increasing", index=None if bad is None else bad + 1,
        passed=bad is None and n_seq[0] >= 1, detail=f"n_seq = {list(n_seq)}",
    ))
    bad = _strictly_increasing(l_seq)
    checks.append(ConditionCheck(
        name="l_seq_increasing", index=bad, passed=bad is None, detail=f"l_seq = {list(l_seq)}",
    ))

    for k in range(len(l_seq) - 1):
        gap = l_seq[k + 1] - l_seq[k]
        growth = (1 + Fraction(1, 7 ** k)) ** gap if gap > 0 else Fraction(1)
        checks.append(ConditionCheck(
            name="condition_lk", index=k, passed=gap > 0 and growth >= 2,
            detail=f"(1 + 7^-{k})^{gap} = {float(growth):.6f} vs 2",
        ))

    prev = 0
    for ell, n in enumerate(n_seq, start=1):
        ok = n > prev + 2 * ell
        note = " (n_0 taken as 0)" if ell == 1 else ""
        checks.append(ConditionCheck(
            name="condition_nl", index=ell, passed=ok, detail=f"n_{ell} = {n} vs n_{ell - 1} + 2ℓ = {prev + 2 * ell}{note}",
        ))
        prev = n

    covered = len(n_seq) < l_seq[-1]
    checks.append(ConditionCheck(
        name="l_seq_covers_stages", index=len(n_seq), passed=covered,
        detail=f"k(ℓ) needed up to ℓ = {len(n_seq)}, l_seq ends at {l_seq[-1]}",
    ))

    eta = params.effective_eta
    checks.append(ConditionCheck(
        name="eta_small", passed=0 < eta < Fraction(1, 100 * params.d), detail=f"eta = {eta} vs 1/(100·{params.d})",
    ))
    checks.append(ConditionCheck(
        name="eta_square", passed=(1 - eta) ** 2 > Fraction(1, 2), detail=f"(1 - eta)^2 = {float((1 - eta) ** 2):.6f}",
    ))

    report = ValidationReport(checks=checks)
    if not report.accepted:
        for failure in report.failures:
            logger.warning("Condition %s failed at index %s: %s", failure.name, failure.index, failure.detail)
    return report


def k_of(params: ConstructionParams, ell: int) -> int:
    """
    The unique k with ℓ_k ≤ ℓ < ℓ_{k+1}; k(0) is taken as 0.

    Raises:
        ValueError: If ``ell`` is negative.
        ParamsError: If ``ell`` is beyond the range covered by l_seq.
    """
    if ell < 0:
        raise ValueError(f"ℓ must be >= 0, got {ell}")
    if ell == 0:
        return 0
    k = bisect.bisect_right(params.l_seq, ell) - 1
    if k < 0 or k + 1 >= len(params.l_seq):
        raise ParamsError(f"l_seq exhausted at ℓ={ell}")
    return k


# ── Derived constants ──────────────────────────────────────────────────────────

@dataclass(frozen=True)
class DerivedConstants:
    """Constants fixed by (d, eta)."""
    d: int
    eta: Fraction
    epsilon: Fraction
    c_min: int
    p1: int
    p2: int
    K1: Fraction
    K2: Fraction
    theta1: Fraction

    def theta2(self, M: int) -> Fraction:
        """θ₁^{7^{p2}·M} / (7^{p2}·M + 2), exact. The numerator has millions of digits."""
        if M < 1:
            raise ValueError(f"M must be a positive integer, got {M}")
        e = 7 ** self.p2 * M
        return self.theta1 ** e / (e + 2)

    def log_theta2(self, M: int) -> float:
        """Natural log of :meth:`theta2`, computed without building the exact value."""
        if M < 1:
            raise ValueError(f"M must be a positive integer, got {M}")
        e = 7 ** self.p2 * M
        log_theta1 = math.log(self.theta1.numerator) - math.log(self.theta1.denominator)
        return e * log_theta1 - math.log(e + 2)

    def choice_of_lb(self, h_base: int, ell_base: int, c: int) -> bool:
        """K1·c/h_{n_ℓ̄} + K2/3^ℓ̄ < ε."""
        return self.K1 * Fraction(c, h_base) + self.K2 / 3 ** ell_base < self.epsilon

    def newcondlb(self, ell_base: int) -> bool:
        """(K1 + K2)/3^ℓ̄ < η."""
        return (self.K1 + self.K2) / 3 ** ell_base < self.eta


def _smallest_p1(d: int) -> int:
    p = d + 1
    while 3 ** p <= 2 * d + 1:
        p += 1
    return p


def _smallest_p2(eta: Fraction) -> int:
    p = 0
    while Fraction(1, 3 ** p) >= eta / 3:
        p += 1
    return p


def constants(params: ConstructionParams) -> DerivedConstants:
    """
    Compute the derived constants. The default eta is 1/(128·d).

    Raises:
        ParamsError: If the eta in use violates 0 < eta < 1/(100 d) or (1 - eta)^2 > 1/2.
    """
    d = params.d
    eta = params.effective_eta
    if not 0 < eta < Fraction(1, 100 * d):
        raise ParamsError(f"eta must satisfy 0 < eta < 1/(100·{d}), got {eta}")
    if (1 - eta) ** 2 <= Fraction(1, 2):
        raise ParamsError(f"eta must satisfy (1 - eta)^2 > 1/2, got {eta}")

    epsilon = eta / 4
    c_min = math.floor(1 / epsilon) + 1
    K1 = (1 + 2 / eta) / (1 - eta) * d
    theta1 = (1 - eta) / (Fraction(2 * d) / (1 - eta) ** (2 * d) + 1)
    return DerivedConstants(
        d=d,
        eta=eta,
        epsilon=epsilon,
        c_min=c_min,
        p1=_smallest_p1(d),
        p2=_smallest_p2(eta),
        K1=K1,
        K2=6 * K1,
        theta1=theta1,
    )
