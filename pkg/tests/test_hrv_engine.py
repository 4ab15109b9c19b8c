import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fusion_framework.analysis.hrv_engine import (
    HF_BAND,
    HRV_CSV_COLUMNS,
    LF_BAND,
    band_powers,
    compensate_delay,
    compute_hrv_windows,
    export_hrv_csv,
    hf_norm,
    lf_hf_ratio,
    lf_norm,
    mean_hr,
    normalized_hr_series,
    resample_tachogram,
    rmssd,
    sdnn,
)
from fusion_framework.core.errors import (
    EmptyInputError,
    TooFewSamplesError,
    TooShortRecordError,
    UnsortedInputError,
    ZeroDenominatorError,
)
from fusion_framework.core.records import ReconstructedBeat
from tests.helpers import beats_from_rr, constant_beats


def modulated_beats(freq_hz: float, duration_s: float = 300.0, amplitude_ms: float = 50.0):
    rr, t = [], 0.0
    while t <= duration_s * 1000:
        interval = int(round(800 + amplitude_ms * math.sin(2 * math.pi * freq_hz * t / 1000)))
        rr.append(interval)
        t += interval
    return beats_from_rr(rr)


def regime_beats(sd_by_third, seed: int = 3, duration_s: float = 900.0):
    """Beats whose R-R spread changes at each third of the record."""
    rng = np.random.default_rng(seed)
    third_ms = duration_s * 1000 / 3
    beats, ts, seq = [], 0, 0
    while ts <= duration_s * 1000 + 1000:
        sd = sd_by_third[min(int(ts // third_ms), 2)]
        rr = int(round(rng.normal(850, sd)))
        ts += rr
        beats.append(ReconstructedBeat("subject1", seq, ts, rr))
        seq += 1
    return beats


def dft_lf_norm(beats):
    ts = np.array([b.beat_ts for b in beats], dtype=np.int64)
    rr = np.array([b.rr_ms for b in beats], dtype=float)
    series = resample_tachogram(ts, rr)
    spectrum = np.abs(np.fft.rfft(series)) ** 2
    freqs = np.fft.rfftfreq(series.size, d=0.25)
    lf = spectrum[(freqs >= LF_BAND[0]) & (freqs < LF_BAND[1])].sum()
    hf = spectrum[(freqs >= HF_BAND[0]) & (freqs < HF_BAND[1])].sum()
    return 100 * lf / (lf + hf)


class TestTimeDomain:
    def test_sdnn(self):
        assert sdnn([800, 800, 800]) == 0
        assert sdnn([800, 820, 780, 800]) == pytest.approx(16.330, abs=5e-4)
        with pytest.raises(TooFewSamplesError):
            sdnn([800])

    def test_rmssd(self):
        assert rmssd([800, 800, 800]) == 0
        assert rmssd([800, 810, 790]) == pytest.approx(15.811, abs=5e-4)
        assert rmssd([800, 900]) == pytest.approx(100.0)
        with pytest.raises(TooFewSamplesError):
            rmssd([])

    def test_mean_hr(self):
        assert mean_hr([800] * 5) == pytest.approx(75.0)
        assert mean_hr([1000] * 5) == pytest.approx(60.0)
        assert mean_hr([600, 1000]) == pytest.approx(75.0)
        with pytest.raises(EmptyInputError):
            mean_hr([])

    @settings(max_examples=1000)
    @given(st.lists(st.integers(min_value=300, max_value=2000), min_size=2, max_size=100))
    def test_match_brute_force(self, rr):
        n = len(rr)
        mean = sum(rr) / n
        expected_sdnn = math.sqrt(sum((x - mean) ** 2 for x in rr) / (n - 1))
        diffs = [b - a for a, b in zip(rr, rr[1:])]
        expected_rmssd = math.sqrt(sum(d * d for d in diffs) / len(diffs))
        assert sdnn(rr) == pytest.approx(expected_sdnn, rel=1e-9, abs=1e-9)
        assert rmssd(rr) == pytest.approx(expected_rmssd, rel=1e-9, abs=1e-9)

    @given(
        st.lists(st.integers(min_value=300, max_value=2000), min_size=2, max_size=50),
        st.floats(min_value=0.1, max_value=10),
    )
    def test_scaling(self, rr, k):
        scaled = [k * x for x in rr]
        assert sdnn(scaled) == pytest.approx(k * sdnn(rr), rel=1e-9, abs=1e-9)
        assert rmssd(scaled) == pytest.approx(k * rmssd(rr), rel=1e-9, abs=1e-9)


class TestRatios:
    def test_examples(self):
        assert lf_hf_ratio(2.0, 1.0) == 2.0
        assert lf_norm(2.0, 1.0) == pytest.approx(66.67, abs=0.01)
        assert lf_hf_ratio(0, 5.0) == 0
        assert lf_norm(0, 5.0) == 0

    def test_zero_denominators(self):
        with pytest.raises(ZeroDenominatorError):
            lf_hf_ratio(1.0, 0)
        with pytest.raises(ZeroDenominatorError):
            lf_norm(0, 0)

    @given(st.floats(min_value=0, max_value=1e6), st.floats(min_value=1e-6, max_value=1e6))
    def test_norms_sum_to_hundred(self, lf, hf):
        assert lf_norm(lf, hf) + hf_norm(lf, hf) == pytest.approx(100.0)


class TestBandPowers:
    def test_low_frequency_modulation(self):
        beats = modulated_beats(0.10)
        lf, hf = band_powers(beats)
        assert lf_norm(lf, hf) >= 90
        assert dft_lf_norm(beats) >= 90

    def test_high_frequency_modulation(self):
        beats = modulated_beats(0.25)
        lf, hf = band_powers(beats)
        assert lf_norm(lf, hf) <= 10
        assert dft_lf_norm(beats) <= 10

    def test_constant_rr_has_no_power(self):
        lf, hf = band_powers(constant_beats(800, 300))
        assert lf <= 1e-9 and hf <= 1e-9

    def test_too_short(self):
        with pytest.raises(TooShortRecordError):
            band_powers(constant_beats(800, 100))
        with pytest.raises(TooShortRecordError):
            band_powers(constant_beats(2500, 60))

    def test_unsorted(self):
        beats = constant_beats(800, 200)
        with pytest.raises(UnsortedInputError):
            band_powers(beats[::-1])


class TestWindows:
    def test_tumbling(self):
        windows = compute_hrv_windows(constant_beats(1000, 900))
        assert len(windows) == 3
        assert [w.window_start for w in windows] == [0, 300_000, 600_000]
        assert all(w.window_end - w.window_start == 300_000 for w in windows)
        assert all(w.sdnn_ms == 0 and w.mean_hr_bpm == pytest.approx(60.0) for w in windows)

    def test_sliding(self):
        windows = compute_hrv_windows(constant_beats(1000, 600), mode="sliding", hop_s=60)
        assert [w.window_start for w in windows] == [i * 60_000 for i in range(6)]

    def test_short_record_has_no_windows(self):
        assert compute_hrv_windows(constant_beats(1000, 100)) == []

    def test_invalid_modes(self):
        beats = constant_beats(1000, 400)
        with pytest.raises(ValueError):
            compute_hrv_windows(beats, mode="sliding", hop_s=0)
        with pytest.raises(ValueError):
            compute_hrv_windows(beats, mode="hopping")
        with pytest.raises(UnsortedInputError):
            compute_hrv_windows(beats[::-1])

    def test_sparse_window_has_absent_fields(self):
        early = [ReconstructedBeat("subject1", i, i * 1000, 1000) for i in range(10)]
        late = [ReconstructedBeat("subject1", 10 + i, 300_000 + i * 1000, 1000) for i in range(601)]
        windows = compute_hrv_windows(early + late)
        assert windows[0].n_beats == 10
        assert windows[0].mean_hr_bpm == pytest.approx(60.0)
        assert windows[0].sdnn_ms is None and windows[0].lf_hf is None
        assert not windows[0].complete
        assert windows[1].complete

    def test_sdnn_drops_in_calm_middle(self):
        windows = compute_hrv_windows(regime_beats((30, 15, 30)))
        assert len(windows) == 3
        first, middle, last = (w.sdnn_ms for w in windows)
        assert middle < first and middle < last

    def test_time_shift_invariance(self):
        beats = regime_beats((30, 15, 30), seed=11)
        shifted = [
            ReconstructedBeat(b.device_id, b.seq, b.beat_ts + 1456387200000, b.rr_ms) for b in beats
        ]
        for w, s in zip(compute_hrv_windows(beats), compute_hrv_windows(shifted)):
            assert s.window_start - w.window_start == 1456387200000
            for name in ("sdnn_ms", "rmssd_ms", "lf_hf", "lf_norm_pct"):
                assert getattr(s, name) == pytest.approx(getattr(w, name), rel=1e-9)

    def test_csv_header(self, tmp_path):
        path = tmp_path / "hrv.csv"
        export_hrv_csv(compute_hrv_windows(constant_beats(1000, 600)), str(path))
        lines = path.read_text().splitlines()
        assert lines[0] == ",".join(HRV_CSV_COLUMNS)
        assert len(lines) == 3


class TestNormalizedSeries:
    def test_constant_rr_is_flat(self):
        series = normalized_hr_series(constant_beats(800, 600))
        assert series.median_bpm == pytest.approx(75.0)
        assert all(value == pytest.approx(0.0) for _, value in series.samples)
        assert series.first_ts == 300_000
        assert np.diff([ts for ts, _ in series.samples]).tolist() == [10_000] * (len(series.samples) - 1)

    def test_median_removed(self):
        rr = [int(800 + 200 * (i % 300) / 300) for i in range(1200)]
        series = normalized_hr_series(beats_from_rr(rr))
        values = [v for _, v in series.samples]
        assert statistics.median(values) == pytest.approx(0.0, abs=1e-9)
        assert statistics.median(v + series.median_bpm for v in values) == pytest.approx(series.median_bpm)

    def test_too_short(self):
        with pytest.raises(TooShortRecordError):
            normalized_hr_series(constant_beats(1000, 299))
        with pytest.raises(TooShortRecordError):
            normalized_hr_series([])

    def test_delay_compensation_moves_to_window_centre(self):
        series = normalized_hr_series(constant_beats(800, 600))
        compensated = compensate_delay(series)
        assert compensated.first_ts == series.first_ts - 150_000
        assert [v for _, v in compensated.samples] == [v for _, v in series.samples]
