"""
config.py
─────────
Run configuration for the ``nfc`` command line.

Values are merged with the precedence flag > config file > environment >
built-in default. Config files are JSON objects and must name both
``n_seq`` and ``l_seq``. Environment defaults: ``NFC_TRUNC``, ``NFC_D``,
``NFC_SEED``, ``NFC_OUTPUT`` (``NFC_LOG_LEVEL`` is read by the loggers).
"""

import json
import os
from fractions import Fraction
from pathlib import Path
from typing import Any, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_serializer, field_validator

from params import DEFAULT_L_SEQ, DEFAULT_N_SEQ, DEFAULT_TRUNC, ConstructionParams
from utils import ConfigError, get_logger

logger = get_logger(__name__)

ENV_KEYS = {
    "trunc": "NFC_TRUNC",
    "d": "NFC_D",
    "seed": "NFC_SEED",
    "output": "NFC_OUTPUT",
}
REQUIRED_FILE_KEYS = ("n_seq", "l_seq")


class RunConfig(BaseModel):
    """Everything a command needs: construction parameters, seed, output and experiment keys."""

    model_config = ConfigDict(extra="forbid", arbitrary_types_allowed=True)

    n_seq: tuple[int, ...] = Field(default=DEFAULT_N_SEQ, description="Special stages n_ℓ")
    l_seq: tuple[int, ...] = Field(default=DEFAULT_L_SEQ, description="Thresholds ℓ_k")
    trunc: int = Field(default=DEFAULT_TRUNC, ge=0, description="Truncation stage N")
    d: int = Field(default=1, ge=1, description="Dimension of the Cartesian power")
    eta: Optional[Fraction] = Field(default=None, description="Construction eta; None is 1/(128 d)")
    seed: int = Field(default=0, ge=0, description="Seed of every random choice")
    output: Literal["csv", "json"] = Field(default="csv")

    window: Optional[tuple[int, int]] = Field(default=None, description="Shift window [A, B]")
    n: Optional[int] = Field(default=None, ge=0, description="Tower level of the query")
    idx: Optional[tuple[int, ...]] = Field(default=None, description="Explicit tower-N levels, one per coordinate")
    depth: Optional[int] = Field(default=None, ge=0, description="Random levels of this tower lifted through middle subcolumns")
    ell: int = Field(default=2, ge=1)
    ell_base: int = Field(default=0, ge=0)
    c: int = Field(default=1, ge=1, description="Small crossing threshold")
    M: int = Field(default=1, ge=1, description="θ₂ interval length in units of h_n")
    r_values: Optional[tuple[int, ...]] = Field(default=None, description="Return times r; None derives them from the heights")
    sizes: tuple[int, ...] = Field(default=(10_000, 100_000, 1_000_000), description="Window lengths of trend reports")
    offsets: tuple[int, ...] = Field(default=(5,), description="Graph offsets e_2..e_d")
    box: Optional[tuple[int, ...]] = Field(default=None, description="Box levels of the Hopf report")
    n_max: int = Field(default=6, ge=0)
    margin: int = Field(default=100, ge=0)
    hierarchy_eta: Fraction = Field(default=Fraction(4, 5), description="η of the abstract hierarchy bounds")

    @field_validator("eta", mode="before")
    @classmethod
    def _parse_eta(cls, value: Any) -> Optional[Fraction]:
        if value is None or value == "default":
            return None
        return value if isinstance(value, Fraction) else Fraction(str(value).strip())

    @field_validator("hierarchy_eta", mode="before")
    @classmethod
    def _parse_hierarchy_eta(cls, value: Any) -> Fraction:
        return value if isinstance(value, Fraction) else Fraction(str(value).strip())

    @field_validator("window", mode="before")
    @classmethod
    def _parse_window(cls, value: Any) -> Any:
        if isinstance(value, str):
            return parse_window(value)
        return value

    @field_serializer("eta", "hierarchy_eta")
    def _dump_fraction(self, value: Optional[Fraction]) -> Optional[str]:
        return None if value is None else f"{value.numerator}/{value.denominator}"

    @property
    def params(self) -> ConstructionParams:
        return ConstructionParams(n_seq=self.n_seq, l_seq=self.l_seq, trunc=self.trunc, d=self.d, eta=self.eta)


def parse_window(text: str) -> tuple[int, int]:
    """Parse ``A..B`` into (A, B).

    Raises:
        ConfigError: If the text is not two integers joined by ``..``.
    """
    lo, sep, hi = text.partition("..")
    try:
        if not sep:
            raise ValueError
        window = int(lo), int(hi)
    except ValueError:
        raise ConfigError(f"window must look like A..B, got {text!r}") from None
    if window[1] < window[0]:
        raise ConfigError(f"window {text!r} is empty")
    return window


def read_config_file(path: str | Path) -> dict[str, Any]:
    """
    Raises:
        ConfigError: On unreadable files, JSON errors (with path:line:column),
            non-object documents or missing required keys.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        document = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    if not isinstance(document, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    missing = [key for key in REQUIRED_FILE_KEYS if key not in document]
    if missing:
        raise ConfigError(f"{path}: missing required key(s) {', '.join(missing)}")
    return document


def env_defaults() -> dict[str, str]:
    return {key: os.environ[var] for key, var in ENV_KEYS.items() if os.environ.get(var)}


def load_config(path: Optional[str | Path] = None, overrides: Optional[dict[str, Any]] = None) -> RunConfig:
    """
    Merge environment, file and flag values into a :class:`RunConfig`.

    Raises:
        ConfigError: If the file is malformed or the merged values do not validate.
    """
    merged: dict[str, Any] = env_defaults()
    if path is not None:
        merged.update(read_config_file(path))
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    try:
        config = RunConfig(**merged)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
    logger.debug("Loaded config: %s", config.model_dump(mode="json"))
    return config
