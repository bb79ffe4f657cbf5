"""Detector thresholds and cleaning switches."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from decimal import Decimal
from typing import Any, Mapping

HOUR = 3600
DAY = 24 * HOUR


@dataclass(frozen=True)
class DetectorConfig:
    """Every tunable used by cleaning, detection and reporting.

    ``velocity_window`` is in seconds and is compared with a strict ``<``;
    ``max_price_deviation`` is a fraction of the initial sale price and is
    inclusive.
    """

    velocity_window: int = 12 * HOUR
    max_price_deviation: Decimal = Decimal("0.05")
    min_sequence_len: int = 2
    max_cycle_len: int = 32
    drop_zero_price: bool = True
    share_rounding: str = "ROUND_HALF_UP"

    def __post_init__(self):
        if not isinstance(self.max_price_deviation, Decimal):
            object.__setattr__(self, "max_price_deviation", Decimal(str(self.max_price_deviation)))
        if self.velocity_window <= 0:
            raise ValueError("velocity_window must be positive")
        if not (0 < self.max_price_deviation < 1):
            raise ValueError("max_price_deviation must lie in (0, 1)")
        if self.min_sequence_len < 2:
            raise ValueError("min_sequence_len must be at least 2")
        if self.max_cycle_len < 1:
            raise ValueError("max_cycle_len must be at least 1")

    def with_overrides(self, **kwargs: Any) -> "DetectorConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})

    def to_dict(self) -> dict:
        d = asdict(self)
        d["max_price_deviation"] = str(self.max_price_deviation)
        return d

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "DetectorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "max_price_deviation" in kwargs:
            kwargs["max_price_deviation"] = Decimal(str(kwargs["max_price_deviation"]))
        return cls(**kwargs)

    @classmethod
    def load(cls, path) -> "DetectorConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
