"""Phone-side Body Area Network ingest.

The phone is clock master of its BAN: R-R intervals arrive over BLE and are
stamped at reception, so true beat times have to be reconstructed from the
interval values. Recorded data is uploaded to the central store in sync
batches whenever the phone reaches the lab network.
"""

import logging
import os
from typing import Any, Iterable, List, Optional, Sequence

import numpy as np

from fusion_framework.core.errors import (
    MalformedRecordError,
    MixedDeviceError,
    NonPositiveInputError,
    UnknownDeviceError,
    UnsortedInputError,
)
from fusion_framework.core.records import (
    BATCH_KIND_ORDER,
    GpsFix,
    ReconstructedBeat,
    RecordKind,
    RrSample,
    SyncBatch,
    decode_record,
    encode_record,
    encoded_size_bytes,
    record_kind,
)

logger = logging.getLogger(__name__)

GAP_TOLERANCE_MS = 500

# Link rates in bits per second.
BLE_4_0_RATE = 0.27e6
WIFI_AC_RATE = 1e9

SYNC_TARGET_S = 15 * 60
OVERNIGHT_BUDGET_S = 4 * 3600
SECONDS_PER_DAY = 86400


def reconstruct_beat_times(
    samples: Sequence[RrSample], gap_tolerance_ms: int = GAP_TOLERANCE_MS
) -> List[ReconstructedBeat]:
    """Rebuilds beat timestamps from reception-stamped R-R samples.

    Samples are split into contiguous runs wherever the reception spacing
    disagrees with the R-R value by more than ``gap_tolerance_ms`` or the
    sequence number skips. Inside a run beat times are the cumulative sum of
    the intervals, anchored so that the mean residual against the reception
    stamps is zero (rounded to the millisecond).
    """
    if not samples:
        return []
    device_id = samples[0].device_id
    for prev, cur in zip(samples, samples[1:]):
        if cur.device_id != device_id:
            raise MixedDeviceError(f"samples from {device_id} and {cur.device_id} mixed")
        if cur.seq <= prev.seq:
            raise UnsortedInputError(f"seq {cur.seq} follows {prev.seq} on {device_id}")
        if cur.reception_ts <= prev.reception_ts:
            raise UnsortedInputError(f"reception_ts not increasing at seq {cur.seq} on {device_id}")

    seq = np.fromiter((s.seq for s in samples), dtype=np.int64, count=len(samples))
    rr = np.fromiter((s.rr_ms for s in samples), dtype=np.int64, count=len(samples))
    rx = np.fromiter((s.reception_ts for s in samples), dtype=np.int64, count=len(samples))

    mismatch = np.abs(np.diff(rx) - rr[1:]) > gap_tolerance_ms
    skipped = np.diff(seq) != 1
    breaks = np.flatnonzero(mismatch | skipped) + 1
    bounds = np.concatenate(([0], breaks, [len(samples)]))

    beats: List[ReconstructedBeat] = []
    for run_id, (start, stop) in enumerate(zip(bounds[:-1], bounds[1:])):
        run_rr = rr[start:stop]
        elapsed = np.cumsum(run_rr)
        anchor = int(round(float(np.mean(rx[start:stop] - elapsed))))
        beat_ts = anchor + elapsed
        assert int(beat_ts[-1] - beat_ts[0]) == int(run_rr[1:].sum()), "reconstruction drift"
        beats.extend(
            ReconstructedBeat(device_id, int(s), int(t), int(r), run_id)
            for s, t, r in zip(seq[start:stop], beat_ts, run_rr)
        )
    if len(bounds) > 2:
        logger.debug("Reconstruction of %s split into %d runs", device_id, len(bounds) - 1)
    return beats


def data_rate_estimate(bytes_per_sample: float, hr_bpm: float) -> float:
    """Cardiac data rate in bits per second (one sample per beat)."""
    if bytes_per_sample <= 0 or hr_bpm <= 0:
        raise NonPositiveInputError("bytes_per_sample and hr_bpm must be positive")
    return bytes_per_sample * 8 * hr_bpm / 60


def estimate_sync_duration(data_bits: float, link_rate_bits_per_s: float) -> float:
    if data_bits <= 0 or link_rate_bits_per_s <= 0:
        raise NonPositiveInputError("data_bits and link_rate_bits_per_s must be positive")
    return data_bits / link_rate_bits_per_s


def estimate_daily_volume(
    hr_bpm: float,
    bytes_per_sample: float = 40,
    seconds: float = SECONDS_PER_DAY,
    extra_bits: float = 0.0,
) -> float:
    """Bits generated over ``seconds`` of cardiac monitoring plus extra payload (GPS, HRV)."""
    if seconds <= 0 or extra_bits < 0:
        raise NonPositiveInputError("seconds must be positive and extra_bits non-negative")
    return data_rate_estimate(bytes_per_sample, hr_bpm) * seconds + extra_bits


def sync_fits_budget(data_bits: float, link_rate_bits_per_s: float, budget_s: float = SYNC_TARGET_S) -> bool:
    return estimate_sync_duration(data_bits, link_rate_bits_per_s) <= budget_s


def _batch_sort_key(record: Any):
    return (BATCH_KIND_ORDER.index(record_kind(record)), record.key)


def build_sync_batch(device_id: str, records_since: int, all_records: Iterable[Any]) -> SyncBatch:
    """Collects the device's records stamped after ``records_since``.

    Records are ordered RR by seq, then GPS by ts, then HRV windows by start;
    ``size_bits`` is the canonical JSONL length of the records times 8.
    """
    if isinstance(records_since, bool) or not isinstance(records_since, int):
        raise MalformedRecordError(f"records_since must be an integer epoch-ms timestamp, got {records_since!r}")
    seen_device = False
    selected = []
    for record in all_records:
        if record_kind(record) not in BATCH_KIND_ORDER or record.device_id != device_id:
            continue
        seen_device = True
        if record.primary_ts > records_since:
            selected.append(record)
    if not seen_device:
        raise UnknownDeviceError(f"no records for device '{device_id}'")
    selected.sort(key=_batch_sort_key)
    size_bits = sum(encoded_size_bytes(r) for r in selected) * 8
    covers = None
    if selected:
        stamps = [r.primary_ts for r in selected]
        covers = (min(stamps), max(stamps))
    return SyncBatch(device_id, tuple(selected), size_bits, covers)


def check_gps_accuracy(fix: GpsFix) -> bool:
    if not fix.in_distribution:
        logger.warning(
            "Anomalous GPS accuracy %.1f m on %s at %d", fix.accuracy_m, fix.device_id, fix.ts
        )
        return False
    return True


def parse_jsonl_line(line: str, kind: RecordKind):
    record = decode_record(kind, line)
    if isinstance(record, GpsFix):
        check_gps_accuracy(record)
    return record


def parse_stream(lines: Iterable[str], kind: RecordKind, source: Optional[str] = None) -> list:
    records = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            records.append(parse_jsonl_line(line, kind))
        except MalformedRecordError as e:
            where = f"{source}:{lineno}" if source else f"line {lineno}"
            raise MalformedRecordError(f"{where}: {e}") from e
    return records


def load_stream(path: str, kind: Optional[RecordKind] = None) -> list:
    """Reads a ``<device>.<kind>.jsonl`` stream synchronously."""
    if kind is None:
        kind = stream_kind(path)
    with open(path, "r") as f:
        return parse_stream(f, kind, source=os.path.basename(path))


def stream_kind(path: str) -> RecordKind:
    parts = os.path.basename(path).split(".")
    if len(parts) < 3 or parts[-1] != "jsonl":
        raise MalformedRecordError(f"stream file name must be <device>.<kind>.jsonl: {path}")
    try:
        return RecordKind(parts[-2])
    except ValueError:
        raise MalformedRecordError(f"unknown stream kind in {path}") from None


def write_stream(path: str, records: Iterable[Any]) -> None:
    with open(path, "w") as f:
        for record in records:
            f.write(encode_record(record))
            f.write("\n")

