"""Heart rate and short-term HRV parameters.

Time domain: SDNN (sample standard deviation of R-R intervals) and RMSSD.
Frequency domain: the R-R tachogram is linearly interpolated at 4 Hz,
mean-removed and passed through a Hann-windowed Welch estimate (128 s
segments, 50% overlap); LF is the PSD integral over [0.04, 0.15) Hz and HF
over [0.15, 0.4) Hz.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import signal as sp_signal
from scipy.integrate import trapezoid

from fusion_framework.core.errors import (
    EmptyInputError,
    TooFewSamplesError,
    TooShortRecordError,
    UnsortedInputError,
    ZeroDenominatorError,
)
from fusion_framework.core.records import HrvWindow, NormalizedHrSeries, ReconstructedBeat

logger = logging.getLogger(__name__)

LF_BAND = (0.04, 0.15)
HF_BAND = (0.15, 0.4)

WINDOW_S = 300.0
MIN_BEATS = 30
MIN_PSD_SPAN_S = 120.0
RESAMPLE_HZ = 4.0
SEGMENT_S = 128.0
HR_CADENCE_S = 10.0

HRV_CSV_COLUMNS = [
    "device_id",
    "window_start",
    "window_end",
    "n_beats",
    "mean_hr_bpm",
    "sdnn_ms",
    "rmssd_ms",
    "lf_hf",
    "lf_norm_pct",
]


def _as_rr(rr: Sequence[float], minimum: int) -> np.ndarray:
    values = np.asarray(rr, dtype=float)
    if values.size < minimum:
        raise TooFewSamplesError(f"need at least {minimum} R-R intervals, got {values.size}")
    return values


def sdnn(rr: Sequence[float]) -> float:
    return float(np.std(_as_rr(rr, 2), ddof=1))


def rmssd(rr: Sequence[float]) -> float:
    diffs = np.diff(_as_rr(rr, 2))
    return float(np.sqrt(np.mean(diffs * diffs)))


def mean_hr(rr: Sequence[float]) -> float:
    values = np.asarray(rr, dtype=float)
    if values.size == 0:
        raise EmptyInputError("mean_hr of an empty R-R series")
    return float(60000.0 / np.mean(values))


def lf_hf_ratio(lf: float, hf: float) -> float:
    if lf < 0 or hf < 0:
        raise ValueError("band powers must be non-negative")
    if hf == 0:
        raise ZeroDenominatorError("LF/HF undefined for zero HF power")
    return lf / hf


def lf_norm(lf: float, hf: float) -> float:
    if lf < 0 or hf < 0:
        raise ValueError("band powers must be non-negative")
    if lf + hf == 0:
        raise ZeroDenominatorError("LF norm undefined when LF and HF are both zero")
    return 100.0 * lf / (lf + hf)


def hf_norm(lf: float, hf: float) -> float:
    return 100.0 - lf_norm(lf, hf)


def _beat_arrays(beats: Sequence[ReconstructedBeat]) -> Tuple[np.ndarray, np.ndarray]:
    ts = np.fromiter((b.beat_ts for b in beats), dtype=np.int64, count=len(beats))
    rr = np.fromiter((b.rr_ms for b in beats), dtype=float, count=len(beats))
    return ts, rr


def _check_sorted(ts: np.ndarray) -> None:
    if ts.size > 1 and np.any(np.diff(ts) < 0):
        raise UnsortedInputError("beats must be sorted by beat_ts")


def resample_tachogram(ts_ms: np.ndarray, rr_ms: np.ndarray, fs: float = RESAMPLE_HZ) -> np.ndarray:
    """Evenly resampled, mean-removed R-R series."""
    t = (ts_ms - ts_ms[0]) / 1000.0
    grid = np.arange(0.0, t[-1], 1.0 / fs)
    series = np.interp(grid, t, rr_ms)
    return series - series.mean()


def _band_powers(ts_ms: np.ndarray, rr_ms: np.ndarray, fs: float, segment_s: float) -> Tuple[float, float]:
    if rr_ms.size < MIN_BEATS:
        raise TooShortRecordError(f"PSD needs at least {MIN_BEATS} beats, got {rr_ms.size}")
    span_s = (ts_ms[-1] - ts_ms[0]) / 1000.0
    if span_s < MIN_PSD_SPAN_S:
        raise TooShortRecordError(f"PSD needs {MIN_PSD_SPAN_S:.0f} s of beats, got {span_s:.1f} s")
    series = resample_tachogram(ts_ms, rr_ms, fs)
    nperseg = min(int(round(segment_s * fs)), series.size)
    freqs, psd = sp_signal.welch(
        series,
        fs=fs,
        window="hann",
        nperseg=nperseg,
        noverlap=nperseg // 2,
        detrend=False,
        scaling="density",
    )

    def integrate(band):
        mask = (freqs >= band[0]) & (freqs < band[1])
        if np.count_nonzero(mask) < 2:
            return float(np.sum(psd[mask]) * (freqs[1] - freqs[0]))
        return float(trapezoid(psd[mask], freqs[mask]))

    return integrate(LF_BAND), integrate(HF_BAND)


def band_powers(
    beats: Sequence[ReconstructedBeat], fs: float = RESAMPLE_HZ, segment_s: float = SEGMENT_S
) -> Tuple[float, float]:
    """(LF, HF) power in ms² of the interpolated R-R tachogram."""
    ts, rr = _beat_arrays(beats)
    _check_sorted(ts)
    return _band_powers(ts, rr, fs, segment_s)


def _window_params(
    device_id: str,
    start: int,
    end: int,
    ts: np.ndarray,
    rr: np.ndarray,
    min_beats: int,
    fs: float,
    segment_s: float,
) -> HrvWindow:
    n = int(rr.size)
    if n < min_beats:
        return HrvWindow(
            device_id, start, end, n, mean_hr_bpm=mean_hr(rr) if n else None
        )
    lf = hf = ratio = norm = None
    try:
        lf, hf = _band_powers(ts, rr, fs, segment_s)
        ratio = lf_hf_ratio(lf, hf) if hf > 0 else None
        norm = lf_norm(lf, hf) if lf + hf > 0 else None
    except TooShortRecordError as e:
        logger.debug("No band powers for %s window at %d: %s", device_id, start, e)
    return HrvWindow(
        device_id,
        start,
        end,
        n,
        mean_hr_bpm=mean_hr(rr),
        sdnn_ms=sdnn(rr),
        rmssd_ms=rmssd(rr),
        lf_power=lf,
        hf_power=hf,
        lf_hf=ratio,
        lf_norm_pct=norm,
    )


def compute_hrv_windows(
    beats: Sequence[ReconstructedBeat],
    mode: str = "tumbling",
    hop_s: float = WINDOW_S,
    window_s: float = WINDOW_S,
    min_beats: int = MIN_BEATS,
    fs: float = RESAMPLE_HZ,
    segment_s: float = SEGMENT_S,
) -> List[HrvWindow]:
    """HRV windows aligned to the first beat.

    Tumbling mode uses back-to-back windows; sliding mode advances by
    ``hop_s``. Only complete windows are emitted; windows with fewer than
    ``min_beats`` beats carry no HRV values.
    """
    if mode == "tumbling":
        hop_s = window_s
    elif mode == "sliding":
        if hop_s <= 0:
            raise ValueError(f"sliding hop must be positive, got {hop_s}")
    else:
        raise ValueError(f"unknown window mode {mode!r}")
    if not beats:
        return []
    ts, rr = _beat_arrays(beats)
    _check_sorted(ts)
    device_id = beats[0].device_id

    window_ms = int(round(window_s * 1000))
    hop_ms = int(round(hop_s * 1000))
    first, last = int(ts[0]), int(ts[-1])
    windows = []
    start = first
    while start + window_ms <= last:
        lo, hi = np.searchsorted(ts, [start, start + window_ms], side="left")
        windows.append(
            _window_params(device_id, start, start + window_ms, ts[lo:hi], rr[lo:hi], min_beats, fs, segment_s)
        )
        start += hop_ms
    return windows


def normalized_hr_series(
    beats: Sequence[ReconstructedBeat],
    window_s: float = WINDOW_S,
    cadence_s: float = HR_CADENCE_S,
) -> NormalizedHrSeries:
    """Mean HR over a trailing window every ``cadence_s``, lowered by its median."""
    if not beats:
        raise TooShortRecordError("no beats")
    ts, rr = _beat_arrays(beats)
    _check_sorted(ts)
    window_ms = int(round(window_s * 1000))
    cadence_ms = int(round(cadence_s * 1000))
    first, last = int(ts[0]), int(ts[-1])
    if last - first < window_ms:
        raise TooShortRecordError(
            f"normalized HR needs {window_s:.0f} s of beats, got {(last - first) / 1000:.1f} s"
        )

    eval_ts = np.arange(first + window_ms, last + 1, cadence_ms, dtype=np.int64)
    # trailing window (t - window, t]
    lo = np.searchsorted(ts, eval_ts - window_ms, side="right")
    hi = np.searchsorted(ts, eval_ts, side="right")
    csum = np.concatenate(([0.0], np.cumsum(rr)))
    counts = hi - lo
    keep = counts > 0
    eval_ts, lo, hi, counts = eval_ts[keep], lo[keep], hi[keep], counts[keep]
    hr = 60000.0 / ((csum[hi] - csum[lo]) / counts)

    median = float(np.median(hr))
    values = hr - median
    return NormalizedHrSeries(
        device_id=beats[0].device_id,
        samples=tuple(zip(eval_ts.tolist(), values.tolist())),
        median_bpm=median,
        window_s=window_s,
        cadence_s=cadence_s,
    )


def compensate_delay(series: NormalizedHrSeries) -> NormalizedHrSeries:
    """Restamps a trailing-window series at window centres (shift by window/2)."""
    shift = int(round(series.window_s * 1000 / 2))
    return NormalizedHrSeries(
        device_id=series.device_id,
        samples=tuple((ts - shift, value) for ts, value in series.samples),
        median_bpm=series.median_bpm,
        window_s=series.window_s,
        cadence_s=series.cadence_s,
    )


def hrv_dataframe(windows: Sequence[HrvWindow]) -> pd.DataFrame:
    rows = [{column: getattr(w, column) for column in HRV_CSV_COLUMNS} for w in windows]
    frame = pd.DataFrame(rows, columns=HRV_CSV_COLUMNS)
    return frame.astype({"window_start": "int64", "window_end": "int64", "n_beats": "int64"})


def export_hrv_csv(windows: Sequence[HrvWindow], path: str) -> None:
    hrv_dataframe(windows).to_csv(path, index=False, float_format="%.6f", lineterminator="\n")


def export_normalized_csv(series: Sequence[NormalizedHrSeries], path: str) -> None:
    rows = [
        {"device_id": s.device_id, "ts": ts, "hr_minus_median_bpm": value, "median_bpm": s.median_bpm}
        for s in series
        for ts, value in s.samples
    ]
    frame = pd.DataFrame(rows, columns=["device_id", "ts", "hr_minus_median_bpm", "median_bpm"])
    frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
