"""Physical / cognitive / rest segmentation of a multi-subject HR timeline.

A social physical activity raises everyone's HR together and uniformly, a
cognitive one raises it unevenly, rest leaves it at the median. The group is
therefore described per 60 s slice by its mean elevation above median and the
spread of that elevation across subjects, plus whether most of the group is
travelling.
"""

import bisect
import logging
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.signal import find_peaks

from fusion_framework.analysis.hrv_engine import compensate_delay
from fusion_framework.config import ActivityConfig
from fusion_framework.core.errors import (
    FewerThanTwoSubjectsError,
    InsufficientCoverageError,
    MissingSubjectCoverageError,
)
from fusion_framework.core.records import (
    ActivityLabel,
    ActivitySegment,
    MovementInterval,
    NormalizedHrSeries,
)

logger = logging.getLogger(__name__)

SEGMENT_CSV_COLUMNS = ["start", "end", "label", "group_elevation_bpm", "dispersion_bpm", "moving"]

Window = Tuple[int, int]


def _covers(series: NormalizedHrSeries, start: int, end: int) -> bool:
    if not series.samples:
        return False
    cadence_ms = int(round(series.cadence_s * 1000))
    return series.first_ts <= start and series.last_ts >= end - cadence_ms


def _window_mean(series: NormalizedHrSeries, window: Window) -> float:
    start, end = window
    if not _covers(series, start, end):
        raise MissingSubjectCoverageError(f"{series.device_id} does not cover [{start}, {end})")
    lo = bisect.bisect_left(series.samples, (start,))
    hi = bisect.bisect_left(series.samples, (end,))
    values = [value for _, value in series.samples[lo:hi]]
    if not values:
        raise MissingSubjectCoverageError(f"{series.device_id} has no samples in [{start}, {end})")
    return float(np.mean(values))


def subject_means(series: Mapping[str, NormalizedHrSeries], window: Window) -> Dict[str, float]:
    return {subject: _window_mean(series[subject], window) for subject in sorted(series)}


def group_elevation(series: Mapping[str, NormalizedHrSeries], window: Window) -> float:
    """Mean over subjects of each subject's mean normalized HR in ``window``."""
    if not series:
        raise MissingSubjectCoverageError("no subjects")
    return float(np.mean(list(subject_means(series, window).values())))


def inter_subject_dispersion(series: Mapping[str, NormalizedHrSeries], window: Window) -> float:
    """Sample standard deviation across subjects of their mean normalized HR."""
    if len(series) < 2:
        raise FewerThanTwoSubjectsError(f"dispersion needs at least 2 subjects, got {len(series)}")
    return float(np.std(list(subject_means(series, window).values()), ddof=1))


def _common_span(series: Mapping[str, NormalizedHrSeries]) -> Tuple[int, int]:
    empty = [s for s, v in series.items() if not v.samples]
    if empty:
        raise InsufficientCoverageError(f"no HR samples for {', '.join(sorted(empty))}")
    return max(v.first_ts for v in series.values()), min(v.last_ts for v in series.values())


def _slice_label(
    elevation: float, dispersion: float, majority_moving: bool, previous: Optional[ActivityLabel], params: ActivityConfig
) -> ActivityLabel:
    if elevation < params.e_rest_bpm:
        return ActivityLabel.REST
    if elevation >= params.e_act_bpm:
        if dispersion <= params.d_split_bpm or majority_moving:
            return ActivityLabel.PHYSICAL
        return ActivityLabel.COGNITIVE
    return previous if previous is not None else ActivityLabel.REST


def _runs(labels: Sequence[ActivityLabel]) -> List[List]:
    runs: List[List] = []
    for label in labels:
        if runs and runs[-1][0] == label:
            runs[-1][1] += 1
        else:
            runs.append([label, 1])
    return runs


def _absorb_short_runs(runs: List[List], min_slices: int) -> List[List]:
    """Short runs take the preceding run's label; leading ones take the next run's."""
    result: List[List] = []
    pending = 0
    for label, count in runs:
        if count < min_slices:
            if result:
                result[-1][1] += count
            else:
                pending += count
            continue
        if result and result[-1][0] == label:
            result[-1][1] += count
        else:
            result.append([label, count + pending])
        pending = 0
    if not result:
        label = max(runs, key=lambda r: r[1])[0]
        return [[label, pending]]
    return result


def _majority_moving(
    movement_by_subject: Mapping[str, Sequence[MovementInterval]], n_subjects: int, start: int, end: int
) -> bool:
    moving = sum(
        1 for intervals in movement_by_subject.values() if any(i.overlaps(start, end) for i in intervals)
    )
    return 2 * moving > n_subjects


def classify_segments(
    series: Mapping[str, NormalizedHrSeries],
    movement: Sequence[MovementInterval] = (),
    params: ActivityConfig = ActivityConfig(),
) -> List[ActivitySegment]:
    """Labels the common coverage of all subjects slice by slice and merges runs.

    Series are restamped at their window centres before slicing. A slice is
    rest below ``e_rest_bpm``; physical at or above ``e_act_bpm`` when the
    group is uniform or mostly moving; cognitive at or above ``e_act_bpm``
    when dispersed and not moving; otherwise it keeps the previous label.
    """
    if len(series) < 2:
        raise FewerThanTwoSubjectsError(f"segmentation needs at least 2 subjects, got {len(series)}")
    compensated = {subject: compensate_delay(s) for subject, s in series.items()}
    start, end = _common_span(compensated)
    slice_ms = int(round(params.slice_s * 1000))
    n_slices = max(0, (end - start) // slice_ms)
    if n_slices < 2:
        raise InsufficientCoverageError(
            f"common HR coverage of {max(0, end - start) / 1000:.0f} s is shorter than two slices"
        )

    subjects = set(series)
    movement_by_subject: Dict[str, List[MovementInterval]] = {}
    for interval in movement:
        if interval.device_id in subjects:
            movement_by_subject.setdefault(interval.device_id, []).append(interval)

    labels, elevations, dispersions, moving = [], [], [], []
    previous: Optional[ActivityLabel] = None
    for k in range(n_slices):
        window = (start + k * slice_ms, start + (k + 1) * slice_ms)
        means = list(subject_means(compensated, window).values())
        elevation = float(np.mean(means))
        dispersion = float(np.std(means, ddof=1))
        majority = _majority_moving(movement_by_subject, len(subjects), *window)
        previous = _slice_label(elevation, dispersion, majority, previous, params)
        labels.append(previous)
        elevations.append(elevation)
        dispersions.append(dispersion)
        moving.append(majority)

    runs = _absorb_short_runs(_runs(labels), params.min_segment_slices)
    segments = []
    first = 0
    for label, count in runs:
        last = first + count
        segments.append(
            ActivitySegment(
                start_ts=start + first * slice_ms,
                end_ts=start + last * slice_ms,
                label=label,
                group_elevation_bpm=float(np.mean(elevations[first:last])),
                dispersion_bpm=float(np.mean(dispersions[first:last])),
                moving=any(moving[first:last]),
                subject_ids=frozenset(subjects),
            )
        )
        first = last
    logger.info("Segmented %d slices into %s", n_slices, ", ".join(s.label.value for s in segments))
    return segments


def elevation_profile(
    series: Mapping[str, NormalizedHrSeries], start: int, end: int, slice_s: float = 60.0
) -> List[Tuple[int, float]]:
    """Group elevation per slice over ``[start, end)`` clipped to the common coverage."""
    if not series:
        raise MissingSubjectCoverageError("no subjects")
    first, last = _common_span(series)
    start, end = max(start, first), min(end, last)
    slice_ms = int(round(slice_s * 1000))
    profile = []
    t = start
    while t + slice_ms <= end:
        profile.append((t, group_elevation(series, (t, t + slice_ms))))
        t += slice_ms
    return profile


def elevation_peaks(
    profile: Sequence[Tuple[int, float]], e_act: float, prominence_bpm: float = 1.0
) -> List[Tuple[int, float]]:
    """Local maxima of an elevation profile above ``e_act``."""
    if len(profile) < 3:
        return []
    values = np.array([value for _, value in profile])
    peaks, _ = find_peaks(values, height=e_act, prominence=prominence_bpm)
    return [profile[i] for i in peaks]


def segments_dataframe(segments: Sequence[ActivitySegment]) -> pd.DataFrame:
    rows = [
        {
            "start": s.start_ts,
            "end": s.end_ts,
            "label": s.label.value,
            "group_elevation_bpm": s.group_elevation_bpm,
            "dispersion_bpm": s.dispersion_bpm,
            "moving": s.moving,
        }
        for s in segments
    ]
    return pd.DataFrame(rows, columns=SEGMENT_CSV_COLUMNS)


def export_segments_csv(segments: Sequence[ActivitySegment], path: str) -> None:
    segments_dataframe(segments).to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
