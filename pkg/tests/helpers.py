"""Record builders shared by the test modules."""

from typing import Dict, Iterable, List, Sequence

import numpy as np

from fusion_framework.core.records import GpsFix, NormalizedHrSeries, ReconstructedBeat, RrSample

OFFICE = (45.784, 4.873)
START_MS = 1456387200000


def beats_from_rr(rr_ms: Iterable[int], device_id: str = "subject1", start_ts: int = 0) -> List[ReconstructedBeat]:
    """Beats whose first timestamp is ``start_ts`` and whose gaps are the given intervals."""
    beats = []
    ts = start_ts
    for seq, rr in enumerate(rr_ms):
        if seq:
            ts += int(rr)
        beats.append(ReconstructedBeat(device_id, seq, ts, int(rr)))
    return beats


def constant_beats(rr_ms: int, duration_s: float, device_id: str = "subject1") -> List[ReconstructedBeat]:
    n = int(duration_s * 1000 // rr_ms) + 1
    return beats_from_rr([rr_ms] * n, device_id)


def series_from_values(
    device_id: str, values: Sequence[float], start_ts: int = 0, cadence_s: float = 10.0
) -> NormalizedHrSeries:
    step = int(cadence_s * 1000)
    samples = tuple((start_ts + i * step, float(v)) for i, v in enumerate(values))
    return NormalizedHrSeries(device_id, samples, median_bpm=70.0, window_s=300.0, cadence_s=cadence_s)


def rr_samples(rr_ms: Sequence[int], jitter_ms: Sequence[int], device_id: str = "subject1", start: int = 10_000):
    elapsed = np.cumsum(rr_ms)
    return [
        RrSample(device_id, seq, int(rr), int(start + t + j))
        for seq, (rr, t, j) in enumerate(zip(rr_ms, elapsed, jitter_ms))
    ]


def gps_track(device_id: str, positions, start_ts: int = 0, interval_s: float = 10.0, accuracy_m: float = 5.0):
    step = int(interval_s * 1000)
    return [
        GpsFix(device_id, start_ts + i * step, lat, lon, accuracy_m) for i, (lat, lon) in enumerate(positions)
    ]


def by_subject(records) -> Dict[str, list]:
    grouped: Dict[str, list] = {}
    for record in records:
        grouped.setdefault(record.device_id, []).append(record)
    return grouped
