"""Experiment configuration: JSON round-trip, digests, and the dyadic
probing window every (horizon, annulus) pair is checked against."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field as dataclass_field, fields
from pathlib import Path
from typing import Mapping

from .law import ConductanceLaw, load_law

__all__ = [
    "SCHEMA_VERSION",
    "ConfigError",
    "window_contains",
    "window_annuli",
    "ExperimentConfig",
]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    """Raised for malformed or inconsistent experiment configuration."""


def window_contains(n: int, k: int) -> bool:
    """Whether the dyadic time 4^k sits in the probing window for horizon n:
    exp((log log n)^2) <= 4^k <= n / log n."""
    if n < 2 or k < 1:
        return False
    t_k = 4.0**k
    log_n = math.log(n)
    lower = math.exp(math.log(log_n) ** 2)
    upper = n / log_n
    return lower <= t_k <= upper


def window_annuli(n: int) -> list[int]:
    """All annulus indices k >= 1 whose dyadic time is in the window."""
    if n < 2:
        return []
    out = []
    k = 1
    while 4.0**k <= n / math.log(n):
        if window_contains(n, k):
            out.append(k)
        k += 1
    return out


def _int_tuple(name: str, value, minimum: int) -> tuple[int, ...]:
    try:
        items = tuple(int(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a sequence of integers") from exc
    if not items:
        raise ConfigError(f"{name} must not be empty")
    if any(v < minimum for v in items):
        raise ConfigError(f"{name} entries must be >= {minimum}, got {items}")
    return items


@dataclass(frozen=True)
class ExperimentConfig:
    """Inputs of a reproducible experiment run.

    ``law`` is either an inline law mapping or a path to a law JSON file.
    Horizon/annulus pairs outside the probing window are allowed but are
    flagged on every emitted row.
    """

    law: Mapping | str
    d: int = 4
    seeds: tuple[int, ...] = (1,)
    horizons: tuple[int, ...] = (16, 32, 64)
    annuli: tuple[int, ...] = (2, 3)
    walkers: int = 100_000
    threads: int = 1
    alpha: float = 0.5
    box_sizes: tuple[int, ...] = (16,)
    output_dir: str = "runs"
    schema: int = SCHEMA_VERSION

    def __post_init__(self) -> None:
        if self.schema != SCHEMA_VERSION:
            raise ConfigError(
                f"config schema {self.schema} unsupported (expected {SCHEMA_VERSION})"
            )
        if self.d < 1:
            raise ConfigError(f"dimension must be >= 1, got {self.d}")
        object.__setattr__(self, "seeds", _int_tuple("seeds", self.seeds, 0))
        if any(s >= 1 << 64 for s in self.seeds):
            raise ConfigError("seeds must fit in 64 bits")
        object.__setattr__(
            self, "horizons", _int_tuple("horizons", self.horizons, 1)
        )
        object.__setattr__(self, "annuli", _int_tuple("annuli", self.annuli, 1))
        object.__setattr__(
            self, "box_sizes", _int_tuple("box_sizes", self.box_sizes, 1)
        )
        if self.walkers < 1:
            raise ConfigError(f"walkers must be >= 1, got {self.walkers}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")

    # -- window flags --------------------------------------------------------

    def window_flags(self) -> dict[tuple[int, int], bool]:
        """In-window boolean for every configured (horizon, annulus) pair."""
        return {
            (n, k): window_contains(n, k)
            for n in self.horizons
            for k in self.annuli
        }

    # -- law -----------------------------------------------------------------

    def resolve_law(self) -> ConductanceLaw:
        return load_law(self.law)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": self.schema,
            "law": self.law if isinstance(self.law, str) else dict(self.law),
            "d": self.d,
            "seeds": list(self.seeds),
            "horizons": list(self.horizons),
            "annuli": list(self.annuli),
            "walkers": self.walkers,
            "threads": self.threads,
            "alpha": self.alpha,
            "box_sizes": list(self.box_sizes),
            "output_dir": self.output_dir,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def digest(self) -> str:
        canonical = json.dumps(
            self.to_dict(), sort_keys=True, separators=(",", ":")
        )
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, obj: Mapping) -> "ExperimentConfig":
        if not isinstance(obj, Mapping):
            raise ConfigError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "law" not in obj:
            raise ConfigError("config requires a 'law' entry")
        kwargs = dict(obj)
        for name in ("seeds", "horizons", "annuli", "box_sizes"):
            if name in kwargs:
                kwargs[name] = tuple(kwargs[name])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(f"bad config value: {exc}") from exc

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        p = Path(path)
        try:
            obj = json.loads(p.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {p}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {p} is not valid JSON: {exc}") from exc
        return cls.from_dict(obj)
