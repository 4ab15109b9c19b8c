"""Mapping of per-phone clocks onto the common reference clock.

Phones synchronize against a time server, which still leaves up to a couple
of seconds between two devices. Offsets are modelled only (no drift rate).
"""

import json
import logging
import os
from dataclasses import dataclass
from itertools import combinations
from typing import Dict, Iterable, Optional, Sequence, Tuple

from fusion_framework.core.errors import (
    ConfigError,
    EmptyModelListError,
    InvalidClockModelError,
    NonMonotonicTimestampsError,
)

logger = logging.getLogger(__name__)

DEFAULT_SKEW_BOUND_MS = 2000

Exchange = Tuple[int, int, int, int]


@dataclass(frozen=True)
class ClockModel:
    """``offset_ms`` is device clock minus common clock."""

    device_id: str
    offset_ms: int
    skew_bound_ms: int = DEFAULT_SKEW_BOUND_MS

    @property
    def valid(self) -> bool:
        return abs(self.offset_ms) <= self.skew_bound_ms


@dataclass(frozen=True)
class SkewReport:
    max_gap_ms: int
    passed: bool
    worst_pair: Optional[Tuple[str, str]] = None


def _check_exchange(t0, t1, t2, t3) -> None:
    if t0 > t3:
        raise NonMonotonicTimestampsError(f"local receive {t3} precedes local send {t0}")
    if t1 > t2:
        raise NonMonotonicTimestampsError(f"remote reply {t2} precedes remote receive {t1}")


def estimate_offset(t0: float, t1: float, t2: float, t3: float) -> float:
    """Two-way exchange offset estimate.

    t0/t3 are send/receive on the local (common) clock, t1/t2 receive/reply on
    the remote (device) clock. The error equals half the one-way delay asymmetry.
    """
    _check_exchange(t0, t1, t2, t3)
    return ((t1 - t0) + (t2 - t3)) / 2


def round_trip_delay(t0: float, t1: float, t2: float, t3: float) -> float:
    _check_exchange(t0, t1, t2, t3)
    return (t3 - t0) - (t2 - t1)


def best_offset(exchanges: Iterable[Exchange]) -> float:
    """Offset of the exchange with the smallest round-trip delay."""
    exchanges = list(exchanges)
    if not exchanges:
        raise EmptyModelListError("no exchanges to estimate an offset from")
    best = min(exchanges, key=lambda e: round_trip_delay(*e))
    return estimate_offset(*best)


def to_common_clock(device_ts: int, model: ClockModel) -> int:
    if not model.valid:
        raise InvalidClockModelError(
            f"{model.device_id}: offset {model.offset_ms} ms exceeds bound {model.skew_bound_ms} ms"
        )
    return device_ts - model.offset_ms


def from_common_clock(common_ts: int, model: ClockModel) -> int:
    if not model.valid:
        raise InvalidClockModelError(
            f"{model.device_id}: offset {model.offset_ms} ms exceeds bound {model.skew_bound_ms} ms"
        )
    return common_ts + model.offset_ms


def check_skew(models: Sequence[ClockModel]) -> SkewReport:
    """Passes when no two devices differ by more than twice the skew bound."""
    if not models:
        raise EmptyModelListError("check_skew needs at least one clock model")
    bound = min(m.skew_bound_ms for m in models)
    max_gap, worst = 0, None
    for a, b in combinations(models, 2):
        gap = abs(a.offset_ms - b.offset_ms)
        if gap > max_gap:
            max_gap, worst = gap, (a.device_id, b.device_id)
    return SkewReport(max_gap_ms=max_gap, passed=max_gap <= 2 * bound, worst_pair=worst)


def model_from_entry(device_id: str, entry: dict, skew_bound_ms: int) -> ClockModel:
    bound = entry.get("skew_bound_ms", skew_bound_ms)
    if "offset_ms" in entry:
        offset = entry["offset_ms"]
    elif "exchanges" in entry:
        offset = best_offset(tuple(e) for e in entry["exchanges"])
    else:
        raise ConfigError(f"clock entry for {device_id} needs 'offset_ms' or 'exchanges'")
    return ClockModel(device_id, int(round(offset)), int(bound))


def load_clock_models(path: str, skew_bound_ms: int = DEFAULT_SKEW_BOUND_MS) -> Dict[str, ClockModel]:
    """Reads a JSON object keyed by device_id into clock models."""
    if not os.path.exists(path):
        raise ConfigError(f"clock file not found: {path}")
    with open(path, "r") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"clock file {path} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"clock file {path} must hold an object keyed by device_id")
    models = {
        device_id: model_from_entry(device_id, entry, skew_bound_ms)
        for device_id, entry in sorted(data.items())
    }
    for model in models.values():
        logger.info("Clock %s: offset %+d ms", model.device_id, model.offset_ms)
    return models
