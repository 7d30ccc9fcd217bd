"""
utils.py
────────
Shared utilities for the nearly finite Chacon simulator:
  - Structured logging at INFO level (``NFC_LOG_LEVEL`` overrides)
  - Timing decorator for heavy scans
  - Domain error hierarchy
  - Rational rendering helpers used by every report
"""

import functools
import logging
import os
import time
from fractions import Fraction
from typing import Any, Callable, TypeVar

F = TypeVar("F", bound=Callable[..., Any])


# ── Logging ────────────────────────────────────────────────────────────────────

def get_logger(name: str) -> logging.Logger:
    """
    Create and return a module-level logger with a human-readable format.

    Args:
        name: Usually ``__name__`` from the calling module.

    Returns:
        Configured :class:`logging.Logger` instance writing to stderr.
    """
    logger = logging.getLogger(name)
    if not logger.handlers:
        handler = logging.StreamHandler()
        formatter = logging.Formatter(
            "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )
        handler.setFormatter(formatter)
        logger.addHandler(handler)
    level = os.getenv("NFC_LOG_LEVEL", "INFO").upper()
    logger.setLevel(getattr(logging, level, logging.INFO))
    return logger


def timer(func: F) -> F:
    """Decorator to measure and log function execution time."""
    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        start = time.perf_counter()
        res = func(*args, **kwargs)
        elapsed = time.perf_counter() - start
        logging.getLogger(func.__module__).info("Function %s took %.4f seconds", func.__name__, elapsed)
        return res

    return wrapper  # type: ignore[return-value]


# ── Errors ─────────────────────────────────────────────────────────────────────

class NfcError(Exception):
    """Base class for every error raised by the simulator."""


class ParamsError(NfcError, ValueError):
    """Construction parameters are unusable (empty sequences, exhausted l_seq, bad eta)."""


class OutOfTruncationError(NfcError):
    """An orbit window leaves the truncation tower."""

    def __init__(self, message: str, valid_window: tuple[int, int] | None = None) -> None:
        super().__init__(message)
        self.valid_window = valid_window


class ZeroMassError(NfcError):
    """A ratio was requested on a measure with no mass in the reference set."""


class HypothesisError(NfcError):
    """An experiment precondition does not hold for the given inputs."""


class NotFoundError(NfcError):
    """A search over a finite candidate range came back empty."""


class ConfigError(NfcError):
    """The configuration document could not be parsed or validated."""


# ── Rational helpers ───────────────────────────────────────────────────────────

def frac_str(value: Fraction | int) -> str:
    """Render an exact rational as ``p/q`` (or ``p`` for integers)."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def frac_decimal(value: Fraction | int, digits: int = 12) -> str:
    """Decimal rendering with a fixed number of significant digits."""
    return f"{float(Fraction(value)):.{digits}g}"

