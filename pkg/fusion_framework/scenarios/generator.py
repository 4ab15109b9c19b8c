"""Synthetic BAN streams with ground truth.

Everything is drawn from one ``numpy`` generator seeded by the scenario, in a
fixed order, so a seed fully determines the written files.
"""

import json
import logging
import math
import os
import shutil
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from fusion_framework.analysis.geo_fusion import offset_position
from fusion_framework.core.records import GpsFix, RrSample, RR_MAX_MS, RR_MIN_MS
from fusion_framework.ingest.ban_ingest import write_stream
from fusion_framework.scenarios.base_scenario import ScenarioSpec, walk_duration_s

logger = logging.getLogger(__name__)

DERIVED_DIRS = ("central", "report")

# (start_s, end_s, value) relative to the scenario start
Interval = Tuple[float, float, float]


@dataclass
class ScenarioData:
    spec: ScenarioSpec
    rr_streams: Dict[str, List[RrSample]] = field(default_factory=dict)
    gps_streams: Dict[str, List[GpsFix]] = field(default_factory=dict)
    clocks: Dict[str, dict] = field(default_factory=dict)
    ground_truth: dict = field(default_factory=dict)

    @property
    def subjects(self) -> List[str]:
        return sorted(self.rr_streams)


@dataclass
class _Leg:
    start_s: float
    end_s: float
    origin: Tuple[float, float]
    target: Tuple[float, float]


@dataclass
class _Timeline:
    """Common true-time plan shared by all subjects."""

    phases: List[Tuple[str, float, float]] = field(default_factory=list)
    # (start_s, end_s, venue position, at_desks)
    stays: List[Tuple[float, float, Tuple[float, float], bool]] = field(default_factory=list)
    legs: List[_Leg] = field(default_factory=list)
    # stressed subjects per phase
    stressed: List[List[str]] = field(default_factory=list)


def subject_ids(n: int) -> List[str]:
    return [f"subject{i + 1}" for i in range(n)]


def _plan(spec: ScenarioSpec) -> _Timeline:
    plan = _Timeline()
    t = 0.0
    for phase in spec.phases:
        end = t + phase.duration_s
        plan.phases.append((phase.label.value, t, end))
        motion = phase.motion_profile
        home = spec.venues[motion.venue]
        if motion.destination is None:
            plan.stays.append((t, end, home, motion.at_desks))
        else:
            away = spec.venues[motion.destination]
            walk = walk_duration_s(spec, motion)
            depart = t + motion.lead_s
            arrive = depart + walk
            plan.stays.append((t, depart, home, False))
            plan.legs.append(_Leg(depart, arrive, home, away))
            if motion.return_trip:
                back = end - motion.lead_s - walk
                plan.stays.append((arrive, back, away, False))
                plan.legs.append(_Leg(back, end - motion.lead_s, away, home))
                plan.stays.append((end - motion.lead_s, end, home, motion.at_desks))
            else:
                plan.stays.append((arrive, end, away, motion.at_desks))
        t = end
    return plan


def _hr_intervals(spec: ScenarioSpec, plan: _Timeline, rng: np.random.Generator) -> Dict[str, List[Interval]]:
    """Per-subject HR shifts; draws the stressed players of each phase."""
    subjects = subject_ids(spec.subjects)
    shifts: Dict[str, List[Interval]] = {s: [] for s in subjects}
    stressed_by_phase = []
    for phase, (_, start, end) in zip(spec.phases, plan.phases):
        hr = phase.hr_profile
        if hr.plateau_bpm:
            for s in subjects:
                shifts[s].append((start, end, hr.plateau_bpm))
        if hr.bout_bpm:
            for leg in plan.legs:
                if start <= leg.start_s < end:
                    for s in subjects:
                        shifts[s].append((leg.start_s, min(end, leg.end_s + hr.recovery_s), hr.bout_bpm))
        low, high = hr.stressed_subjects
        stressed: List[str] = []
        if high > 0:
            count = min(int(rng.integers(low, high + 1)), len(subjects))
            stressed = sorted(subjects[i] for i in rng.choice(len(subjects), size=count, replace=False))
        if high > 0 or hr.others_bpm != (0.0, 0.0):
            for s in subjects:
                lo, hi = hr.stressed_bpm if s in stressed else hr.others_bpm
                shifts[s].append((start, end, float(rng.uniform(lo, hi))))
        stressed_by_phase.append(stressed)
    plan.stressed = stressed_by_phase
    return shifts


def _sd_intervals(spec: ScenarioSpec, plan: _Timeline) -> List[Interval]:
    return [
        (start, end, phase.hr_profile.rr_sd_scale)
        for phase, (_, start, end) in zip(spec.phases, plan.phases)
        if phase.hr_profile.rr_sd_scale != 1.0
    ]


def _piecewise(t_s: np.ndarray, intervals: List[Interval], base: float, combine: str = "add") -> np.ndarray:
    values = np.full(t_s.shape, base, dtype=float)
    for start, end, value in intervals:
        mask = (t_s >= start) & (t_s < end)
        if combine == "add":
            values[mask] += value
        else:
            values[mask] *= value
    return values


def _beat_times(
    spec: ScenarioSpec, shifts: List[Interval], sd_scale: List[Interval], rng: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """True beat times (ms from start) and their R-R intervals.

    Each interval is drawn around the mean R-R implied by the HR at the
    previous beat; beat times and intervals are solved by fixed-point
    iteration over one pre-drawn noise vector.
    """
    total_ms = spec.duration_s * 1000.0
    base_hr = 60000.0 / spec.baseline_rr_ms
    peak_hr = base_hr + sum(max(v, 0.0) for _, _, v in shifts)
    n = int(math.ceil(total_ms / (60000.0 / peak_hr) * 1.2)) + 100
    noise = rng.normal(0.0, spec.rr_sd_ms, size=n)

    rr = np.clip(np.rint(spec.baseline_rr_ms + noise), RR_MIN_MS, RR_MAX_MS)
    for _ in range(6):
        ts = np.cumsum(rr)
        previous_s = np.concatenate(([0.0], ts[:-1])) / 1000.0
        mean_rr = 60000.0 / _piecewise(previous_s, shifts, base_hr)
        scale = _piecewise(previous_s, sd_scale, 1.0, combine="multiply")
        rr = np.clip(np.rint(mean_rr + scale * noise), RR_MIN_MS, RR_MAX_MS)
    ts = np.cumsum(rr)
    keep = ts < total_ms
    return ts[keep].astype(np.int64), rr[keep].astype(np.int64)


def _rr_stream(
    spec: ScenarioSpec, subject: str, beat_ts: np.ndarray, rr: np.ndarray, offset_ms: int, rng: np.random.Generator
) -> List[RrSample]:
    latency = spec.latency_ms + rng.integers(0, spec.jitter_ms + 1, size=beat_ts.size)
    reception = spec.start_epoch_ms + beat_ts + latency + offset_ms
    kept = rng.random(beat_ts.size) >= spec.drop_rate
    kept[0] = True
    return [
        RrSample(subject, int(seq), int(r), int(rx))
        for seq, r, rx in zip(np.flatnonzero(kept), rr[kept], reception[kept])
    ]


def _position_at(plan: _Timeline, t_s: float, desk: Tuple[float, float]) -> Tuple[Tuple[float, float], bool]:
    """(north_m, east_m) of the group at ``t_s`` and whether it is outdoors."""
    for leg in plan.legs:
        if leg.start_s <= t_s < leg.end_s:
            f = (t_s - leg.start_s) / (leg.end_s - leg.start_s)
            north = leg.origin[0] + f * (leg.target[0] - leg.origin[0])
            east = leg.origin[1] + f * (leg.target[1] - leg.origin[1])
            return (north, east), True
    for start, end, venue, at_desks in plan.stays:
        if start <= t_s < end:
            if at_desks:
                return (venue[0] + desk[0], venue[1] + desk[1]), False
            return venue, False
    return plan.stays[-1][2], False


def _gps_stream(
    spec: ScenarioSpec, plan: _Timeline, subject_index: int, offset_ms: int, rng: np.random.Generator
) -> List[GpsFix]:
    subject = subject_ids(spec.subjects)[subject_index]
    desk = (0.0, spec.desk_spacing_m * subject_index)
    interval_ms = int(round(spec.fix_interval_s * 1000))
    total_ms = int(round(spec.duration_s * 1000))
    times = np.arange(0, total_ms, interval_ms)
    u_acc = rng.random(times.size)
    u_radius = rng.random(times.size)
    u_angle = rng.random(times.size)

    fixes = []
    for k, t_ms in enumerate(times):
        (north, east), outdoors = _position_at(plan, t_ms / 1000.0, desk)
        low, high = spec.outdoor_accuracy_m if outdoors else spec.indoor_accuracy_m
        accuracy = round(float(math.exp(math.log(low) + u_acc[k] * (math.log(high) - math.log(low)))), 1)
        radius = accuracy * spec.jitter_fraction * u_radius[k]
        angle = 2 * math.pi * u_angle[k]
        lat, lon = offset_position(
            *spec.origin, north + radius * math.cos(angle), east + radius * math.sin(angle)
        )
        fixes.append(
            GpsFix(subject, int(spec.start_epoch_ms + t_ms + offset_ms), round(lat, 7), round(lon, 7), accuracy)
        )
    return fixes


def _clock_entry(offset_ms: int, rng: np.random.Generator, epoch_ms: int, exchanges: int = 3) -> dict:
    """NTP-style exchanges with symmetric path delays against the time server."""
    entries = []
    t0 = epoch_ms
    for _ in range(exchanges):
        delay = int(rng.integers(5, 81))
        processing = int(rng.integers(1, 6))
        t1 = t0 + delay + offset_ms
        t2 = t1 + processing
        t3 = t0 + 2 * delay + processing
        entries.append([t0, t1, t2, t3])
        t0 += 60_000
    return {"exchanges": entries}


def generate_scenario(spec: ScenarioSpec) -> ScenarioData:
    """Builds RR and GPS streams, clock exchanges and the ground truth of ``spec``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    subjects = subject_ids(spec.subjects)
    plan = _plan(spec)

    offsets = {
        s: int(rng.integers(-spec.offset_bound_ms, spec.offset_bound_ms + 1)) for s in subjects
    }
    shifts = _hr_intervals(spec, plan, rng)
    sd_scale = _sd_intervals(spec, plan)

    data = ScenarioData(spec)
    for index, subject in enumerate(subjects):
        beat_ts, rr = _beat_times(spec, shifts[subject], sd_scale, rng)
        data.rr_streams[subject] = _rr_stream(spec, subject, beat_ts, rr, offsets[subject], rng)
        data.gps_streams[subject] = _gps_stream(spec, plan, index, offsets[subject], rng)
        data.clocks[subject] = _clock_entry(offsets[subject], rng, spec.start_epoch_ms - 600_000)

    epoch = spec.start_epoch_ms
    data.ground_truth = {
        "scenario": spec.name,
        "seed": spec.seed,
        "subjects": subjects,
        "phases": [
            {"label": label, "start_ts": epoch + int(round(start * 1000)), "end_ts": epoch + int(round(end * 1000))}
            for label, start, end in plan.phases
        ],
        "walks": [
            {"start_ts": epoch + int(round(leg.start_s * 1000)), "end_ts": epoch + int(round(leg.end_s * 1000))}
            for leg in plan.legs
        ],
        "stressed": plan.stressed,
        "clock_offsets_ms": offsets,
    }
    logger.info(
        "Generated scenario %s (seed %d): %d subjects, %.0f s",
        spec.name,
        spec.seed,
        len(subjects),
        spec.duration_s,
    )
    return data


def _dump_json(path: str, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, indent=2, sort_keys=True)
        f.write("\n")


def write_scenario(
    data: ScenarioData, data_dir: str, derived_dirs: Sequence[str] = DERIVED_DIRS
) -> List[str]:
    """Writes ``streams/<subject>.{rr,gps}.jsonl``, ``clocks.json`` and ``ground_truth.json``.

    A previous recording in ``data_dir`` is replaced: its streams and the
    directories derived from them (central store, reports) are removed first.
    """
    streams_dir = os.path.join(data_dir, "streams")
    for name in ("streams", *derived_dirs):
        stale = os.path.join(data_dir, name)
        if os.path.isdir(stale):
            logger.info("Removing %s from a previous recording", stale)
            shutil.rmtree(stale)
    os.makedirs(streams_dir, exist_ok=True)
    written = []
    for subject in data.subjects:
        for kind, records in (("rr", data.rr_streams[subject]), ("gps", data.gps_streams[subject])):
            path = os.path.join(streams_dir, f"{subject}.{kind}.jsonl")
            write_stream(path, records)
            written.append(path)
    for name, obj in (("clocks.json", data.clocks), ("ground_truth.json", data.ground_truth)):
        path = os.path.join(data_dir, name)
        _dump_json(path, obj)
        written.append(path)
    return written
