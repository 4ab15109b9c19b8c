"""Record types exchanged on topics and persisted by the central store.

Every record serializes to one canonical JSONL line (sorted keys, compact
separators, timestamps as integer epoch milliseconds). The same encoding is
used for on-disk storage and for sync batch size accounting.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, ClassVar, Dict, Optional, Tuple

from fusion_framework.core.errors import MalformedRecordError, UnknownKindError

RR_MIN_MS = 200
RR_MAX_MS = 3000
GPS_ACCURACY_RANGE_M = (4.0, 1200.0)


class RecordKind(str, Enum):
    RR_SAMPLE = "rr"
    GPS_FIX = "gps"
    HRV_WINDOW = "hrv"
    SYNC_BATCH = "sync"
    COLOCATION_EVENT = "colocation"
    ACTIVITY_SEGMENT = "segment"
    RECONSTRUCTED_BEAT = "beat"
    MOVEMENT_INTERVAL = "movement"
    NORMALIZED_HR = "hr"


class ActivityLabel(str, Enum):
    PHYSICAL = "physical"
    COGNITIVE = "cognitive"
    REST = "rest"


def _require(obj: Dict[str, Any], name: str) -> Any:
    try:
        return obj[name]
    except KeyError:
        raise MalformedRecordError(f"missing field '{name}'") from None


def _int(obj: Dict[str, Any], name: str) -> int:
    value = _require(obj, name)
    # Floating-point timestamps are rejected to keep round trips bit-exact.
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedRecordError(f"field '{name}' must be an integer, got {value!r}")
    return value


def _float(obj: Dict[str, Any], name: str) -> float:
    value = _require(obj, name)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise MalformedRecordError(f"field '{name}' must be a number, got {value!r}")
    return float(value)


def _opt_float(obj: Dict[str, Any], name: str) -> Optional[float]:
    if obj.get(name) is None:
        return None
    return _float(obj, name)


def _str(obj: Dict[str, Any], name: str) -> str:
    value = _require(obj, name)
    if not isinstance(value, str) or not value:
        raise MalformedRecordError(f"field '{name}' must be a non-empty string")
    return value


@dataclass(frozen=True)
class RrSample:
    """One R-R interval, stamped by the phone at reception time."""

    kind: ClassVar[RecordKind] = RecordKind.RR_SAMPLE

    device_id: str
    seq: int
    rr_ms: int
    reception_ts: int

    @property
    def key(self) -> int:
        return self.seq

    @property
    def primary_ts(self) -> int:
        return self.reception_ts

    def validate(self) -> None:
        if self.seq < 0:
            raise MalformedRecordError(f"negative seq {self.seq} on {self.device_id}")
        if not RR_MIN_MS <= self.rr_ms <= RR_MAX_MS:
            raise MalformedRecordError(
                f"rr_ms {self.rr_ms} outside [{RR_MIN_MS}, {RR_MAX_MS}] on {self.device_id}"
            )

    @classmethod
    def from_dict(cls, obj: Dict[str, Any]) -> "RrSample":
        return cls(
            device_id=_str(obj, "device_id"),
            seq=_int(obj, "seq"),
            rr_ms=_int(obj, "rr_ms"),
            reception_ts=_int(obj, "reception_ts"),
        )


@dataclass(frozen=True)
class GpsFix:
    kind: ClassVar[RecordKind] = RecordKind.GPS_FIX

    device_id: str
    ts: int
    lat_deg: float
    lon_deg: float
    accuracy_m: float

    @property
    def key(self) -> int:
        return self.ts

    @property
    def primary_ts(self) -> int:
        return self.ts

    @property
    def position(self) -> Tuple[float, float]:
        return (self.lat_deg, self.lon_deg)

    @property
    def in_distribution(self) -> bool:
        low, high = GPS_ACCURACY_RANGE_M
        return low <= self.accuracy_m <= high

    def validate(self) -> None:
        if not -90.0 <= self.lat_deg <= 90.0 or not -180.0 <= self.lon_deg <= 180.0:
            raise MalformedRecordError(
                f"coordinate ({self.lat_deg}, {self.lon_deg}) out of range on {self.device_id}"
            )
        if not self.accuracy_m > 0:
            raise MalformedRecordError(f"accuracy_m must be positive on {self.device_id}")

    @classmethod
    def from_dict(cls, obj: Dict[str, Any]) -> "GpsFix":
        return cls(
            device_id=_str(obj, "device_id"),
            ts=_int(obj, "ts"),
            lat_deg=_float(obj, "lat_deg"),
            lon_deg=_float(obj, "lon_deg"),
            accuracy_m=_float(obj, "accuracy_m"),
        )


@dataclass(frozen=True)
class ReconstructedBeat:
    kind: ClassVar[RecordKind] = RecordKind.RECONSTRUCTED_BEAT

    device_id: str
    seq: int
    beat_ts: int
    rr_ms: int
    run_id: int = 0

    @property
    def key(self) -> int:
        return self.seq

    @property
    def primary_ts(self) -> int:
        return self.beat_ts

    def validate(self) -> None:
        if not RR_MIN_MS <= self.rr_ms <= RR_MAX_MS:
            raise MalformedRecordError(f"rr_ms {self.rr_ms} out of range on {self.device_id}")

    @classmethod
    def from_dict(cls, obj: Dict[str, Any]) -> "ReconstructedBeat":
        return cls(
            device_id=_str(obj, "device_id"),
            seq=_int(obj, "seq"),
            beat_ts=_int(obj, "beat_ts"),
            rr_ms=_int(obj, "rr_ms"),
            run_id=_int(obj, "run_id"),
        )


@dataclass(frozen=True)
class HrvWindow:
    """HRV parameters of one subject over one window; absent values are None."""

    kind: ClassVar[RecordKind] = RecordKind.HRV_WINDOW

    device_id: str
    window_start: int
    window_end: int
    n_beats: int
    mean_hr_bpm: Optional[float] = None
    sdnn_ms: Optional[float] = None
    rmssd_ms: Optional[float] = None
    lf_power: Optional[float] = None
    hf_power: Optional[float] = None
    lf_hf: Optional[float] = None
    lf_norm_pct: Optional[float] = None

    @property
    def key(self) -> int:
        return self.window_start

    @property
    def primary_ts(self) -> int:
        return self.window_start

    @property
    def complete(self) -> bool:
        return self.sdnn_ms is not None

    def validate(self) -> None:
        if self.window_end <= self.window_start:
            raise MalformedRecordError(f"empty HRV window on {self.device_id}")
        for name in ("sdnn_ms", "rmssd_ms", "lf_power", "hf_power"):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise MalformedRecordError(f"negative {name} on {self.device_id}")

    @classmethod
    def from_dict(cls, obj: Dict[str, Any]) -> "HrvWindow":
        return cls(
            device_id=_str(obj, "device_id"),
            window_start=_int(obj, "window_start"),
            window_end=_int(obj, "window_end"),
            n_beats=_int(obj, "n_beats"),
            mean_hr_bpm=_opt_float(obj, "mean_hr_bpm"),
            sdnn_ms=_opt_float(obj, "sdnn_ms"),
            rmssd_ms=_opt_float(obj, "rmssd_ms"),
            lf_power=_opt_float(obj, "lf_power"),
            hf_power=_opt_float(obj, "hf_power"),
            lf_hf=_opt_float(obj, "lf_hf"),
            lf_norm_pct=_opt_float(obj, "lf_norm_pct"),
        )


@dataclass(frozen=True)
class SyncBatch:
    """Records a device uploads to the central store in one synchronization."""

    kind: ClassVar[RecordKind] = RecordKind.SYNC_BATCH

    device_id: str
    records: Tuple[Any, ...] = ()
    size_bits: int = 0
    covers: Optional[Tuple[int, int]] = None

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class ColocationEvent:
    kind: ClassVar[RecordKind] = RecordKind.COLOCATION_EVENT

    subject_ids: frozenset
    start_ts: int
    end_ts: int
    centroid: Tuple[float, float]
    max_spread_m: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            "subject_ids": sorted(self.subject_ids),
            "start_ts": self.start_ts,
            "end_ts": self.end_ts,
            "centroid": list(self.centroid),
            "max_spread_m": self.max_spread_m,
        }


@dataclass(frozen=True)
class MovementInterval:
    kind: ClassVar[RecordKind] = RecordKind.MOVEMENT_INTERVAL

    device_id: str
    start_ts: int
    end_ts: int
    displacement_m: float
    mean_speed_mps: float

    def overlaps(self, start_ts: int, end_ts: int) -> bool:
        return self.start_ts < end_ts and start_ts < self.end_ts


@dataclass(frozen=True)
class ActivitySegment:
    kind: ClassVar[RecordKind] = RecordKind.ACTIVITY_SEGMENT

    start_ts: int
    end_ts: int
    label: ActivityLabel
    group_elevation_bpm: float
    dispersion_bpm: float
    moving: bool
    subject_ids: frozenset = field(default_factory=frozenset)


@dataclass(frozen=True)
class NormalizedHrSeries:
    """Sliding-window mean HR of one subject with its median removed.

    Samples are ``(ts, hr_minus_median_bpm)`` stamped at the end of the
    trailing window they summarize.
    """

    kind: ClassVar[RecordKind] = RecordKind.NORMALIZED_HR

    device_id: str
    samples: Tuple[Tuple[int, float], ...]
    median_bpm: float
    window_s: float = 300.0
    cadence_s: float = 10.0

    @property
    def first_ts(self) -> int:
        return self.samples[0][0]

    @property
    def last_ts(self) -> int:
        return self.samples[-1][0]


STORABLE_KINDS = {
    RecordKind.RR_SAMPLE: RrSample,
    RecordKind.GPS_FIX: GpsFix,
    RecordKind.HRV_WINDOW: HrvWindow,
}

# Ordering of kinds inside a sync batch: RR by seq, then GPS by ts, then HRV.
BATCH_KIND_ORDER = (RecordKind.RR_SAMPLE, RecordKind.GPS_FIX, RecordKind.HRV_WINDOW)


def record_kind(record: Any) -> RecordKind:
    kind = getattr(type(record), "kind", None)
    if not isinstance(kind, RecordKind):
        raise UnknownKindError(f"{type(record).__name__} is not a record type")
    return kind


def as_kind(kind: Any) -> RecordKind:
    try:
        return RecordKind(kind)
    except ValueError:
        raise UnknownKindError(f"unknown record kind {kind!r}") from None


def to_dict(record: Any) -> Dict[str, Any]:
    if hasattr(record, "to_dict"):
        return record.to_dict()
    return asdict(record)


def encode_record(record: Any) -> str:
    """Canonical JSONL line (without the trailing newline)."""
    return json.dumps(to_dict(record), sort_keys=True, separators=(",", ":"), allow_nan=False)


def encoded_size_bytes(record: Any) -> int:
    return len(encode_record(record).encode("utf-8")) + 1


def decode_record(kind: Any, payload: Any):
    """Parses a JSONL line or an already-loaded dict into a validated record."""
    kind = as_kind(kind)
    record_type = STORABLE_KINDS.get(kind)
    if record_type is None:
        raise UnknownKindError(f"records of kind '{kind.value}' are not stored")
    if isinstance(payload, str):
        try:
            payload = json.loads(payload)
        except json.JSONDecodeError as e:
            raise MalformedRecordError(f"invalid JSON: {e}") from e
    if not isinstance(payload, dict):
        raise MalformedRecordError(f"expected a JSON object, got {type(payload).__name__}")
    record = record_type.from_dict(payload)
    record.validate()
    return record
