import asyncio
import glob
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import aiofiles
import pandas as pd

from fusion_framework.analysis.activity_segment import (
    classify_segments,
    elevation_peaks,
    elevation_profile,
    export_segments_csv,
)
from fusion_framework.analysis.geo_fusion import (
    detect_colocation,
    detect_movement,
    export_geojson,
    export_movement_csv,
)
from fusion_framework.analysis.hrv_engine import (
    compensate_delay,
    compute_hrv_windows,
    export_hrv_csv,
    export_normalized_csv,
    normalized_hr_series,
)
from fusion_framework.config import FusionConfig
from fusion_framework.core.console import console
from fusion_framework.core.errors import (
    ClockSkewError,
    FewerThanTwoSubjectsError,
    InputError,
    NoInputStreamsError,
    PipelineStageError,
)
from fusion_framework.core.event_collector import EventCollector
from fusion_framework.core.records import (
    ActivityLabel,
    ActivitySegment,
    GpsFix,
    NormalizedHrSeries,
    RecordKind,
    ReconstructedBeat,
    RrSample,
    SyncBatch,
)
from fusion_framework.core.topic_bus import TopicBus, topic_name
from fusion_framework.ingest.ban_ingest import (
    build_sync_batch,
    estimate_sync_duration,
    parse_stream,
    reconstruct_beat_times,
    stream_kind,
)
from fusion_framework.ingest.timesync import (
    ClockModel,
    check_skew,
    load_clock_models,
    to_common_clock,
)
from fusion_framework.storage.store import Store

logger = logging.getLogger(__name__)

GROUP_TOPIC = "all"
INGEST_PUBLISHER = "ingest"
TIMESYNC_PUBLISHER = "timesync"
PIPELINE_PUBLISHER = "pipeline"

SUBJECT_TOPIC_KINDS = (
    RecordKind.RR_SAMPLE,
    RecordKind.GPS_FIX,
    RecordKind.SYNC_BATCH,
    RecordKind.RECONSTRUCTED_BEAT,
    RecordKind.HRV_WINDOW,
    RecordKind.NORMALIZED_HR,
    RecordKind.MOVEMENT_INTERVAL,
)
GROUP_TOPIC_KINDS = (RecordKind.COLOCATION_EVENT, RecordKind.ACTIVITY_SEGMENT)

SYNC_CSV_COLUMNS = ["device_id", "records", "size_bits", "ble_sync_s", "wifi_sync_s"]


@dataclass
class ReportBundle:
    report_dir: str
    files: Dict[str, str] = field(default_factory=dict)
    segments: List[ActivitySegment] = field(default_factory=list)


@contextmanager
def pipeline_stage(name: str):
    """Wraps unexpected failures of a stage into ``PipelineStageError``."""
    logger.info("Stage %s started", name)
    try:
        yield
    except (InputError, PipelineStageError):
        raise
    except Exception as e:
        logger.error("Stage %s failed: %s", name, e)
        raise PipelineStageError(name, e) from e
    logger.info("Stage %s finished", name)


def find_streams(data_dir: str) -> List[str]:
    paths = sorted(glob.glob(os.path.join(data_dir, "streams", "*.jsonl")))
    if not paths:
        raise NoInputStreamsError(data_dir)
    return paths


async def read_stream(path: str) -> list:
    kind = stream_kind(path)
    async with aiofiles.open(path, "r") as f:
        content = await f.read()
    return parse_stream(content.splitlines(), kind, source=os.path.basename(path))


def _create_topics(bus: TopicBus, subjects: List[str]) -> None:
    for subject in subjects:
        for kind in SUBJECT_TOPIC_KINDS:
            bus.create_topic(topic_name(kind, subject), kind)
    for kind in GROUP_TOPIC_KINDS:
        bus.create_topic(topic_name(kind, GROUP_TOPIC), kind)


def _event_ts(payload) -> Optional[int]:
    if isinstance(payload, SyncBatch):
        return payload.covers[1] if payload.covers else None
    if isinstance(payload, NormalizedHrSeries):
        return payload.first_ts if payload.samples else None
    if hasattr(payload, "primary_ts"):
        return payload.primary_ts
    return payload.start_ts


def _publish_all(
    bus: TopicBus,
    kind: RecordKind,
    subject: str,
    payloads,
    publisher_id: str = PIPELINE_PUBLISHER,
    device_clock: Optional[ClockModel] = None,
) -> None:
    """Publishes stamped with each payload's own time on the common clock.

    Payloads still carrying phone time are mapped through ``device_clock``;
    an out-of-bound clock leaves them on phone time for the skew check to reject.
    """
    name = topic_name(kind, subject)
    for payload in payloads:
        ts = _event_ts(payload)
        if ts is not None and device_clock is not None and device_clock.valid:
            ts = to_common_clock(ts, device_clock)
        bus.publish(name, payload, publisher_id=publisher_id, publish_ts=ts)


def _clock_models(data_dir: str, subjects: List[str], config: FusionConfig) -> Dict[str, ClockModel]:
    path = os.path.join(data_dir, "clocks.json")
    bound = config.timesync.skew_bound_ms
    models = load_clock_models(path, bound) if os.path.exists(path) else {}
    if not models:
        logger.warning("No clock file in %s, assuming synchronized phones", data_dir)
    for subject in subjects:
        if subject not in models:
            logger.warning("No clock model for %s, assuming zero offset", subject)
            models[subject] = ClockModel(subject, 0, bound)
    return {subject: models[subject] for subject in subjects}


async def run_pipeline(data_dir: str, config: FusionConfig = FusionConfig()) -> ReportBundle:
    """Replays the recorded streams of ``data_dir`` through every stage.

    Each stage publishes its outputs on ``<kind>/<subject>`` topics (or
    ``<kind>/all`` for group results); the report files are written from what
    a passive collector subscribed to every topic received.
    """
    paths = find_streams(data_dir)
    bus = TopicBus(high_water=config.bus.high_water)
    collector = EventCollector()

    with pipeline_stage("ingest"):
        loaded = await asyncio.gather(*(read_stream(path) for path in paths))
        streams: Dict[str, Dict[RecordKind, list]] = {}
        for path, records in zip(paths, loaded):
            subject = os.path.basename(path).split(".")[0]
            streams.setdefault(subject, {})[stream_kind(path)] = records
        subjects = sorted(streams)
        models = _clock_models(data_dir, subjects, config)
        _create_topics(bus, subjects)
        collector.attach(bus)
        for subject in subjects:
            for kind in (RecordKind.RR_SAMPLE, RecordKind.GPS_FIX):
                records = streams[subject].get(kind, [])
                _publish_all(bus, kind, subject, records, INGEST_PUBLISHER, device_clock=models[subject])
        console.print(f"Loaded {len(paths)} streams for {len(subjects)} subjects from [cyan]{data_dir}[/cyan]")

    store_dir = os.path.join(data_dir, config.storage.central_dir)
    with pipeline_stage("sync"):
        store = Store.open(store_dir)
        for subject in subjects:
            records = [r for kind in (RecordKind.RR_SAMPLE, RecordKind.GPS_FIX) for r in streams[subject].get(kind, [])]
            if not records:
                continue
            # the whole recording is replayed; records already stored count as duplicates
            batch = build_sync_batch(subject, -1, records)
            store.merge_batch(batch)
            _publish_all(bus, RecordKind.SYNC_BATCH, subject, [batch], device_clock=models[subject])
        store.flush()

    with pipeline_stage("timesync"):
        report = check_skew(list(models.values()))
        if not report.passed:
            logger.error("Clock skew check failed: %d ms between %s", report.max_gap_ms, report.worst_pair)
            raise ClockSkewError(
                f"phones {report.worst_pair} differ by {report.max_gap_ms} ms"
            )
        logger.info("Clock skew check passed (max gap %d ms)", report.max_gap_ms)

    snapshot = store.snapshot()
    beats: Dict[str, List[ReconstructedBeat]] = {}
    fixes: Dict[str, List[GpsFix]] = {}
    with pipeline_stage("reconstruction"):
        for subject in subjects:
            model = models[subject]
            samples: List[RrSample] = snapshot.query(subject, RecordKind.RR_SAMPLE)
            rebuilt = reconstruct_beat_times(samples, config.ingest.gap_tolerance_ms)
            beats[subject] = [replace(b, beat_ts=to_common_clock(b.beat_ts, model)) for b in rebuilt]
            fixes[subject] = [
                replace(f, ts=to_common_clock(f.ts, model)) for f in snapshot.query(subject, RecordKind.GPS_FIX)
            ]
            _publish_all(bus, RecordKind.RECONSTRUCTED_BEAT, subject, beats[subject])
            _publish_all(bus, RecordKind.GPS_FIX, subject, fixes[subject], TIMESYNC_PUBLISHER)

    hrv_params = config.hrv
    with pipeline_stage("hrv"):
        subjects_with_beats = [s for s in subjects if beats[s]]
        windows = await asyncio.gather(
            *(
                asyncio.to_thread(
                    compute_hrv_windows,
                    beats[s],
                    hrv_params.mode,
                    hrv_params.hop_s,
                    hrv_params.window_s,
                    hrv_params.min_beats,
                    hrv_params.resample_hz,
                    hrv_params.segment_s,
                )
                for s in subjects_with_beats
            )
        )
        series = await asyncio.gather(
            *(
                asyncio.to_thread(normalized_hr_series, beats[s], hrv_params.window_s, hrv_params.hr_cadence_s)
                for s in subjects_with_beats
            )
        )
        for subject, subject_windows in zip(subjects_with_beats, windows):
            _publish_all(bus, RecordKind.HRV_WINDOW, subject, subject_windows)
            if subject_windows:
                store.merge_batch(build_sync_batch(subject, -1, subject_windows))
        store.flush()
        for subject, subject_series in zip(subjects_with_beats, series):
            _publish_all(bus, RecordKind.NORMALIZED_HR, subject, [subject_series])

    with pipeline_stage("geo"):
        geo = config.geo
        for subject in subjects:
            intervals = detect_movement(fixes[subject], geo.window_s, geo.speed_threshold_mps)
            _publish_all(bus, RecordKind.MOVEMENT_INTERVAL, subject, intervals)
        events = detect_colocation(
            {s: f for s, f in fixes.items() if f}, geo.time_tol_s, geo.dist_tol_m, geo.merge_gap_s
        )
        _publish_all(bus, RecordKind.COLOCATION_EVENT, GROUP_TOPIC, events)

    with pipeline_stage("segmentation"):
        normalized = {s.device_id: s for s in series}
        movement = [i for intervals in collector.payloads(RecordKind.MOVEMENT_INTERVAL).values() for i in intervals]
        try:
            segments = classify_segments(normalized, movement, config.activity)
        except FewerThanTwoSubjectsError as e:
            logger.warning("Skipping activity segmentation: %s", e)
            console.print(f"[yellow]Skipping activity segmentation: {e}[/yellow]")
            segments = []
        _publish_all(bus, RecordKind.ACTIVITY_SEGMENT, GROUP_TOPIC, segments)
        _log_physical_peaks(normalized, segments, config)

    with pipeline_stage("report"):
        bundle = write_report_bundle(collector, os.path.join(data_dir, "report"), config)
    logger.info("Collector received %d envelopes", collector.delivery_count)
    return bundle


def _log_physical_peaks(normalized, segments: List[ActivitySegment], config: FusionConfig) -> None:
    """Counts group HR peaks inside each physical segment, one per walking bout."""
    params = config.activity
    compensated = {s: compensate_delay(v) for s, v in normalized.items()}
    for segment in segments:
        if segment.label is not ActivityLabel.PHYSICAL:
            continue
        profile = elevation_profile(compensated, segment.start_ts, segment.end_ts, params.slice_s)
        peaks = elevation_peaks(profile, params.e_act_bpm, params.peak_prominence_bpm)
        logger.info(
            "Physical segment %d-%d: %d HR peaks at %s",
            segment.start_ts,
            segment.end_ts,
            len(peaks),
            [ts for ts, _ in peaks],
        )


def _sync_rows(batches: Dict[str, list], config: FusionConfig) -> pd.DataFrame:
    rows = []
    for subject, subject_batches in batches.items():
        for batch in subject_batches:
            bits = batch.size_bits
            rows.append(
                {
                    "device_id": subject,
                    "records": len(batch),
                    "size_bits": bits,
                    "ble_sync_s": estimate_sync_duration(bits, config.ingest.link_rate_bits_per_s) if bits else 0.0,
                    "wifi_sync_s": estimate_sync_duration(bits, config.ingest.wifi_rate_bits_per_s) if bits else 0.0,
                }
            )
    return pd.DataFrame(rows, columns=SYNC_CSV_COLUMNS)


def write_report_bundle(collector: EventCollector, report_dir: str, config: FusionConfig) -> ReportBundle:
    """Writes every report file from the payloads seen by ``collector``."""
    os.makedirs(report_dir, exist_ok=True)
    bundle = ReportBundle(report_dir)

    def path(name: str) -> str:
        bundle.files[name] = os.path.join(report_dir, name)
        return bundle.files[name]

    def flat(kind: RecordKind) -> list:
        return [p for payloads in collector.payloads(kind).values() for p in payloads]

    export_hrv_csv(flat(RecordKind.HRV_WINDOW), path("hrv.csv"))
    export_normalized_csv(flat(RecordKind.NORMALIZED_HR), path("hr_normalized.csv"))
    export_movement_csv(flat(RecordKind.MOVEMENT_INTERVAL), path("movement.csv"))
    export_geojson(
        collector.payloads(RecordKind.GPS_FIX, TIMESYNC_PUBLISHER),
        flat(RecordKind.COLOCATION_EVENT),
        path("colocation.geojson"),
    )
    bundle.segments = flat(RecordKind.ACTIVITY_SEGMENT)
    export_segments_csv(bundle.segments, path("segments.csv"))
    _sync_rows(collector.payloads(RecordKind.SYNC_BATCH), config).to_csv(
        path("sync.csv"), index=False, float_format="%.6f", lineterminator="\n"
    )
    for name, file_path in bundle.files.items():
        console.print(f"Wrote {name} to [green]{file_path}[/green]")
    return bundle
