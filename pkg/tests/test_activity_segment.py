import statistics

import pytest

from fusion_framework.analysis.activity_segment import (
    SEGMENT_CSV_COLUMNS,
    classify_segments,
    elevation_peaks,
    elevation_profile,
    export_segments_csv,
    group_elevation,
    inter_subject_dispersion,
)
from fusion_framework.analysis.hrv_engine import normalized_hr_series
from fusion_framework.config import ActivityConfig
from fusion_framework.core.errors import (
    FewerThanTwoSubjectsError,
    InsufficientCoverageError,
    MissingSubjectCoverageError,
)
from fusion_framework.core.records import ActivityLabel, MovementInterval
from tests.helpers import beats_from_rr, series_from_values

MINUTE = 60_000


def constant_group(levels, n_samples=10):
    return {
        f"subject{i + 1}": series_from_values(f"subject{i + 1}", [level] * n_samples)
        for i, level in enumerate(levels)
    }


def phased_group(phases, samples_per_phase=180):
    """One series per subject made of constant-level phases.

    Samples start half a window late so the phases begin on the minute once
    restamped at window centres.
    """
    n_subjects = len(phases[0])
    return {
        f"subject{i + 1}": series_from_values(
            f"subject{i + 1}", [levels[i] for levels in phases for _ in range(samples_per_phase)],
            start_ts=150_000,
        )
        for i in range(n_subjects)
    }


def stepped_beats(device_id, levels_bpm, shift_bpm=0, start_ts=30_000):
    """Beats at a constant rate per phase; phases end at 20, 40 and 100 minutes.

    Every rate divides a minute evenly so beat spacing is exact.
    """
    rr = []
    t = start_ts
    for level, end in zip(levels_bpm, (20 * MINUTE, 40 * MINUTE, 100 * MINUTE)):
        interval = 60_000 // (level + shift_bpm)
        while t < end:
            rr.append(interval)
            t += interval
    return beats_from_rr(rr, device_id, start_ts)


def everyone_moving(subjects):
    return [MovementInterval(s, -10**8, 10**8, 1000.0, 1e-2) for s in subjects]


class TestWindowStatistics:
    def test_group_elevation(self):
        window = (0, MINUTE)
        assert group_elevation(constant_group([0, 0, 0, 0]), window) == 0
        assert group_elevation(constant_group([8, 8, 8, 8]), window) == pytest.approx(8.0)
        assert group_elevation(constant_group([10, 2, 0, 0]), window) == pytest.approx(3.0)

    def test_dispersion(self):
        window = (0, MINUTE)
        assert inter_subject_dispersion(constant_group([5, 5, 5]), window) == 0
        assert inter_subject_dispersion(constant_group([10, 2, 0, 0]), window) == pytest.approx(
            statistics.stdev([10, 2, 0, 0])
        )
        with pytest.raises(FewerThanTwoSubjectsError):
            inter_subject_dispersion(constant_group([10]), window)

    def test_window_outside_coverage(self):
        with pytest.raises(MissingSubjectCoverageError):
            group_elevation(constant_group([1, 2]), (MINUTE, 3 * MINUTE))
        with pytest.raises(MissingSubjectCoverageError):
            group_elevation({}, (0, MINUTE))


class TestClassification:
    def test_quiet_group_is_one_rest_segment(self):
        segments = classify_segments(constant_group([0, 0, 0, 0], n_samples=60))
        assert [s.label for s in segments] == [ActivityLabel.REST]
        assert segments[0].subject_ids == frozenset(f"subject{i}" for i in range(1, 5))
        assert not segments[0].moving

    def test_uniform_elevation_while_walking_is_physical(self):
        group = constant_group([10, 10, 10, 10], n_samples=60)
        segments = classify_segments(group, everyone_moving(group))
        assert [s.label for s in segments] == [ActivityLabel.PHYSICAL]
        assert segments[0].moving
        assert segments[0].group_elevation_bpm == pytest.approx(10.0)
        assert segments[0].dispersion_bpm == pytest.approx(0.0)

    def test_three_phases(self):
        group = phased_group([(10, 10, 10, 10), (12, 2, 2, 2), (0, 0, 0, 0)])
        segments = classify_segments(group)
        assert [s.label for s in segments] == [
            ActivityLabel.PHYSICAL,
            ActivityLabel.COGNITIVE,
            ActivityLabel.REST,
        ]
        assert segments[1].dispersion_bpm > segments[0].dispersion_bpm
        assert segments[1].start_ts == 30 * MINUTE
        assert segments[2].start_ts == 60 * MINUTE

    def test_segments_tile_the_common_span(self):
        group = phased_group([(10, 10, 10, 10), (12, 2, 2, 2), (0, 0, 0, 0)])
        segments = classify_segments(group)
        assert segments[0].start_ts == 0
        assert segments[-1].end_ts == 89 * MINUTE
        for before, after in zip(segments, segments[1:]):
            assert before.end_ts == after.start_ts
        assert all((s.end_ts - s.start_ts) % MINUTE == 0 for s in segments)

    def test_dispersed_elevation_with_majority_movement_is_physical(self):
        group = constant_group([12, 2, 2, 2], n_samples=60)
        assert [s.label for s in classify_segments(group)] == [ActivityLabel.COGNITIVE]
        moving = everyone_moving(["subject1", "subject2", "subject3"])
        assert [s.label for s in classify_segments(group, moving)] == [ActivityLabel.PHYSICAL]
        half = everyone_moving(["subject1", "subject2"])
        assert [s.label for s in classify_segments(group, half)] == [ActivityLabel.COGNITIVE]

    def test_relabeling(self):
        group = phased_group([(10, 10, 10, 10), (12, 2, 2, 2), (0, 0, 0, 0)])
        rename = {"subject1": "delta", "subject2": "bravo", "subject3": "alpha", "subject4": "charlie"}
        renamed = {
            rename[s]: series_from_values(rename[s], [v for _, v in series.samples], start_ts=series.first_ts)
            for s, series in group.items()
        }
        original = classify_segments(group)
        relabeled = classify_segments(renamed)
        assert [(s.start_ts, s.end_ts, s.label) for s in original] == [
            (s.start_ts, s.end_ts, s.label) for s in relabeled
        ]

    def test_constant_heart_rate_offset_leaves_labels_unchanged(self):
        # (physical, cognitive, rest) rates per subject
        levels = {
            "subject1": (75, 75, 50),
            "subject2": (100, 75, 75),
            "subject3": (75, 50, 50),
            "subject4": (100, 75, 75),
        }
        walking = [MovementInterval(s, 0, 20 * MINUTE, 1000.0, 1.4) for s in levels]

        def segments_with_offset(shift_bpm):
            series = {
                s: normalized_hr_series(stepped_beats(s, rates, shift_bpm)) for s, rates in levels.items()
            }
            return series, classify_segments(series, walking)

        series, segments = segments_with_offset(0)
        shifted_series, shifted = segments_with_offset(25)

        for subject in levels:
            assert shifted_series[subject].median_bpm == pytest.approx(series[subject].median_bpm + 25)
        assert [s.label for s in segments] == [
            ActivityLabel.PHYSICAL,
            ActivityLabel.COGNITIVE,
            ActivityLabel.REST,
        ]
        assert [(s.start_ts, s.end_ts, s.label) for s in shifted] == [
            (s.start_ts, s.end_ts, s.label) for s in segments
        ]

    def test_thresholds_come_from_params(self):
        group = constant_group([4, 4], n_samples=60)
        assert classify_segments(group)[0].label is ActivityLabel.PHYSICAL
        strict = ActivityConfig(e_rest_bpm=5.0, e_act_bpm=6.0)
        assert classify_segments(group, params=strict)[0].label is ActivityLabel.REST

    def test_needs_two_subjects(self):
        with pytest.raises(FewerThanTwoSubjectsError):
            classify_segments(constant_group([0], n_samples=60))

    def test_needs_two_slices(self):
        with pytest.raises(InsufficientCoverageError):
            classify_segments(constant_group([0, 0], n_samples=10))
        group = constant_group([0, 0], n_samples=60)
        group["subject2"] = series_from_values("subject2", [])
        with pytest.raises(InsufficientCoverageError):
            classify_segments(group)

    def test_segments_csv(self, tmp_path):
        path = tmp_path / "segments.csv"
        export_segments_csv(classify_segments(constant_group([0, 0], n_samples=60)), str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(SEGMENT_CSV_COLUMNS)
        assert lines[1].split(",")[2] == "rest"
        assert len(lines) == 2


class TestPeaks:
    def test_two_bumps(self):
        values = [0, 0, 5, 8, 5, 0, 0, 6, 9, 6, 0]
        profile = [(i * MINUTE, float(v)) for i, v in enumerate(values)]
        peaks = elevation_peaks(profile, e_act=3.0)
        assert [ts for ts, _ in peaks] == [3 * MINUTE, 8 * MINUTE]

    def test_peaks_below_threshold_ignored(self):
        profile = [(i * MINUTE, float(v)) for i, v in enumerate([0, 2, 0, 2.5, 0])]
        assert elevation_peaks(profile, e_act=3.0) == []
        assert elevation_peaks(profile[:2], e_act=0.0) == []

    def test_profile_is_clipped_to_coverage(self):
        group = constant_group([4, 6], n_samples=31)
        profile = elevation_profile(group, -10 * MINUTE, 100 * MINUTE)
        assert [ts for ts, _ in profile] == [0, MINUTE, 2 * MINUTE, 3 * MINUTE, 4 * MINUTE]
        assert all(value == pytest.approx(5.0) for _, value in profile)
