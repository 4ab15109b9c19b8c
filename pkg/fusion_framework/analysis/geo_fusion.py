"""GPS fusion across subjects: co-location events and movement intervals.

Positions come from phones mixing GPS, Wi-Fi and cell sources, so the
reported accuracy ranges from a few metres outdoors to more than a kilometre
indoors. Distance rules are inflated by both fixes' accuracy; no trajectory
is inferred between fixes.
"""

import bisect
import json
import logging
import math
from collections import defaultdict
from itertools import combinations
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from fusion_framework.core.errors import OutOfRangeCoordinateError, UnsortedFixesError
from fusion_framework.core.records import ColocationEvent, GpsFix, MovementInterval

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_DEGREE = EARTH_RADIUS_M * math.pi / 180.0

Position = Tuple[float, float]


def _check_position(point: Position) -> None:
    lat, lon = point
    if not -90.0 <= lat <= 90.0 or not -180.0 <= lon <= 180.0:
        raise OutOfRangeCoordinateError(f"coordinate ({lat}, {lon}) out of range")


def haversine_m(a: Position, b: Position) -> float:
    """Great-circle distance in metres."""
    _check_position(a)
    _check_position(b)
    lat1, lon1 = math.radians(a[0]), math.radians(a[1])
    lat2, lon2 = math.radians(b[0]), math.radians(b[1])
    h = math.sin((lat2 - lat1) / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def offset_position(lat: float, lon: float, north_m: float, east_m: float) -> Position:
    """Moves a point by a local north/east offset (small distances)."""
    dlat = north_m / METERS_PER_DEGREE
    dlon = east_m / (METERS_PER_DEGREE * math.cos(math.radians(lat)))
    return (lat + dlat, lon + dlon)


def colocated(a: GpsFix, b: GpsFix, dist_tol_m: float) -> bool:
    """Accuracy-inflated proximity rule between two fixes."""
    return haversine_m(a.position, b.position) <= dist_tol_m + a.accuracy_m + b.accuracy_m


def _check_sorted(fixes: Sequence[GpsFix]) -> None:
    for prev, cur in zip(fixes, fixes[1:]):
        if cur.ts < prev.ts:
            raise UnsortedFixesError(f"fixes of {cur.device_id} not sorted at {cur.ts}")


def _nearest_fix(fixes: Sequence[GpsFix], stamps: List[int], t: int, tol_ms: int) -> Optional[GpsFix]:
    i = bisect.bisect_left(stamps, t)
    best = None
    for j in (i - 1, i):
        if 0 <= j < len(fixes) and abs(stamps[j] - t) <= tol_ms:
            if best is None or abs(stamps[j] - t) < abs(best.ts - t):
                best = fixes[j]
    return best


def detect_colocation(
    fixes_by_subject: Mapping[str, Sequence[GpsFix]],
    time_tol_s: float = 2.0,
    dist_tol_m: float = 20.0,
    merge_gap_s: float = 60.0,
) -> List[ColocationEvent]:
    """Groups of subjects sharing a place over time.

    At each fix instant of any subject, every subject's nearest fix within
    ``time_tol_s`` takes part; pairs satisfying the accuracy-inflated rule are
    joined into groups by connected components. Instants of the same group
    closer than ``merge_gap_s`` form one event; events contained in a larger
    event (by subjects and time) are dropped.
    """
    if time_tol_s < 0:
        raise ValueError("time_tol_s must be non-negative")
    subjects = sorted(fixes_by_subject)
    for subject in subjects:
        _check_sorted(fixes_by_subject[subject])
    if len(subjects) < 2:
        return []

    tol_ms = int(round(time_tol_s * 1000))
    stamps = {s: [f.ts for f in fixes_by_subject[s]] for s in subjects}
    instants = sorted({ts for s in subjects for ts in stamps[s]})

    # group -> list of (instant, fixes participating)
    observed: Dict[frozenset, List[Tuple[int, List[GpsFix]]]] = defaultdict(list)
    for t in instants:
        present = []
        for s in subjects:
            fix = _nearest_fix(fixes_by_subject[s], stamps[s], t, tol_ms)
            if fix is not None:
                present.append((s, fix))
        if len(present) < 2:
            continue
        n = len(present)
        rows, cols = [], []
        for i, j in combinations(range(n), 2):
            if colocated(present[i][1], present[j][1], dist_tol_m):
                rows.append(i)
                cols.append(j)
        if not rows:
            continue
        graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        n_groups, labels = connected_components(graph, directed=False)
        for g in range(n_groups):
            members = [present[i] for i in range(n) if labels[i] == g]
            if len(members) >= 2:
                observed[frozenset(s for s, _ in members)].append((t, [f for _, f in members]))

    merge_gap_ms = int(round(merge_gap_s * 1000))
    events = []
    for group, hits in observed.items():
        run = [hits[0]]
        for hit in hits[1:]:
            if hit[0] - run[-1][0] < merge_gap_ms:
                run.append(hit)
            else:
                events.extend(_event_from_run(group, run))
                run = [hit]
        events.extend(_event_from_run(group, run))

    maximal = [
        e
        for e in events
        if not any(
            o is not e
            and e.subject_ids <= o.subject_ids
            and o.start_ts <= e.start_ts
            and e.end_ts <= o.end_ts
            and (o.subject_ids != e.subject_ids or (o.start_ts, o.end_ts) != (e.start_ts, e.end_ts))
            for o in events
        )
    ]
    maximal.sort(key=lambda e: (e.start_ts, sorted(e.subject_ids)))
    return maximal


def _event_from_run(group: frozenset, run: List[Tuple[int, List[GpsFix]]]) -> List[ColocationEvent]:
    start, end = run[0][0], run[-1][0]
    if end <= start:
        return []
    fixes = [f for _, members in run for f in members]
    centroid = (
        float(np.mean([f.lat_deg for f in fixes])),
        float(np.mean([f.lon_deg for f in fixes])),
    )
    spread = 0.0
    for _, members in run:
        for a, b in combinations(members, 2):
            spread = max(spread, haversine_m(a.position, b.position))
    return [ColocationEvent(group, start, end, centroid, spread)]


def detect_movement(
    fixes: Sequence[GpsFix],
    window_s: float = 60.0,
    speed_threshold_mps: float = 0.5,
) -> List[MovementInterval]:
    """Intervals during which a subject is travelling.

    Fixes are cut into back-to-back windows from the first fix. A window is
    moving when the net displacement between its first and last fix reaches
    ``speed_threshold_mps`` over the window and also exceeds twice the median
    accuracy of its fixes. Adjacent moving windows are merged.
    """
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    _check_sorted(fixes)
    if len(fixes) < 2:
        return []
    window_ms = int(round(window_s * 1000))
    origin = fixes[0].ts

    windows: Dict[int, List[GpsFix]] = defaultdict(list)
    for fix in fixes:
        windows[(fix.ts - origin) // window_ms].append(fix)

    moving: List[Tuple[int, GpsFix, GpsFix]] = []
    for index in sorted(windows):
        members = windows[index]
        if len(members) < 2:
            continue
        first, last = members[0], members[-1]
        displacement = haversine_m(first.position, last.position)
        accuracy = float(np.median([f.accuracy_m for f in members]))
        if displacement / window_s >= speed_threshold_mps and displacement > 2 * accuracy:
            moving.append((index, first, last))

    intervals = []
    group: List[Tuple[int, GpsFix, GpsFix]] = []
    for item in moving:
        if group and item[0] != group[-1][0] + 1:
            intervals.append(_interval_from_windows(group))
            group = []
        group.append(item)
    if group:
        intervals.append(_interval_from_windows(group))
    return [i for i in intervals if i is not None]


def _interval_from_windows(group) -> Optional[MovementInterval]:
    start_fix, end_fix = group[0][1], group[-1][2]
    duration_s = (end_fix.ts - start_fix.ts) / 1000.0
    if duration_s <= 0:
        return None
    displacement = haversine_m(start_fix.position, end_fix.position)
    return MovementInterval(
        device_id=start_fix.device_id,
        start_ts=start_fix.ts,
        end_ts=end_fix.ts,
        displacement_m=displacement,
        mean_speed_mps=displacement / duration_s,
    )


def to_geojson(
    fixes_by_subject: Mapping[str, Sequence[GpsFix]], events: Iterable[ColocationEvent]
) -> dict:
    """FeatureCollection of every fix plus one point per co-location centroid."""
    features = []
    for subject in sorted(fixes_by_subject):
        for fix in fixes_by_subject[subject]:
            features.append(
                {
                    "type": "Feature",
                    "geometry": {"type": "Point", "coordinates": [fix.lon_deg, fix.lat_deg]},
                    "properties": {
                        "kind": "fix",
                        "device_id": fix.device_id,
                        "ts": fix.ts,
                        "accuracy_m": fix.accuracy_m,
                    },
                }
            )
    for event in events:
        lat, lon = event.centroid
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [lon, lat]},
                "properties": {
                    "kind": "colocation",
                    "subject_ids": sorted(event.subject_ids),
                    "start_ts": event.start_ts,
                    "end_ts": event.end_ts,
                    "max_spread_m": event.max_spread_m,
                },
            }
        )
    return {"type": "FeatureCollection", "features": features}


def export_geojson(fixes_by_subject, events, path: str) -> None:
    with open(path, "w") as f:
        json.dump(to_geojson(fixes_by_subject, events), f, indent=1, sort_keys=True)
        f.write("\n")


def export_movement_csv(intervals: Sequence[MovementInterval], path: str) -> None:
    columns = ["device_id", "start_ts", "end_ts", "displacement_m", "mean_speed_mps"]
    frame = pd.DataFrame([{c: getattr(i, c) for c in columns} for i in intervals], columns=columns)
    frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
