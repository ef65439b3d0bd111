"""Wavelet modulus-maxima and windowed peak-search delineation baselines."""

import logging
from dataclasses import dataclass, field
from typing import List, Literal, Sequence, Tuple

import numpy as np
from scipy.signal import butter, sosfiltfilt

from python_keed.config import ConfigSection, section
from python_keed.core import (
    DelineationResult,
    IntervalDelineation,
    KeypointEstimate,
    TimeSeriesRecord,
    WAVE_KINDS,
    Wave,
)
from python_keed.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

LOWPASS = np.array([1.0, 3.0, 3.0, 1.0]) / 8.0
HIGHPASS_GAIN = 2.0


@section("wt", "baseline")
@dataclass(frozen=True)
class WtConfig(ConfigSection):
    """Baseline delineator settings.

    Attributes:
        n_scales: Number of à trous scales computed
        analysis_scale: Scale (1-based) searched for P and T waves
        p_search: P window as fractions of the R-R interval, measured from the opening R
        t_search: T window as fractions of the R-R interval
        presence_factor: Presence threshold relative to the interval's RMS (DWT) or std (Peak)
        onset_factor: Onset level relative to the first modulus maximum
        offset_factor: Offset level relative to the second modulus maximum
        peak_band: Band-pass corners (Hz) of the peak-search method
        qrs_guard: Seconds kept clear of the neighbouring QRS by the peak-search windows
    """
    n_scales: int = field(default=5, metadata={"name": ["n_scales"], "type": "int"})
    analysis_scale: int = field(default=4, metadata={"name": ["analysis_scale", "scale"], "type": "int"})
    p_search: Tuple[float, float] = field(default=(0.55, 0.95), metadata={"name": ["p_search"], "type": "range"})
    t_search: Tuple[float, float] = field(default=(0.05, 0.55), metadata={"name": ["t_search"], "type": "range"})
    presence_factor: float = field(default=0.25, metadata={"name": ["presence_factor", "epsilon"], "type": "float"})
    onset_factor: float = field(default=0.05, metadata={"name": ["onset_factor"], "type": "float"})
    offset_factor: float = field(default=0.10, metadata={"name": ["offset_factor"], "type": "float"})
    peak_band: Tuple[float, float] = field(default=(0.5, 15.0), metadata={"name": ["peak_band"], "type": "range"})
    qrs_guard: float = field(default=0.08, metadata={"name": ["qrs_guard"], "type": "float"})

    def __post_init__(self):
        if not 1 <= self.analysis_scale <= self.n_scales:
            raise ConfigError(f"analysis_scale {self.analysis_scale} outside 1..{self.n_scales}")
        for name in ("p_search", "t_search"):
            lo, hi = getattr(self, name)
            if not 0 < lo < hi < 1:
                raise ConfigError(f"{name} must satisfy 0 < start < end < 1, got {(lo, hi)}")
        if self.t_search[1] > self.p_search[0]:
            raise ConfigError(f"t_search {self.t_search} overlaps p_search {self.p_search}")
        for name in ("presence_factor", "onset_factor", "offset_factor"):
            if not 0 < getattr(self, name) < 1:
                raise ConfigError(f"{name} must lie in (0, 1), got {getattr(self, name)}")
        if not 0 < self.peak_band[0] < self.peak_band[1]:
            raise ConfigError(f"peak_band must satisfy 0 < low < high, got {self.peak_band}")
        if self.qrs_guard < 0:
            raise ConfigError(f"qrs_guard must be non-negative, got {self.qrs_guard}")

    def window(self, wave: Wave) -> Tuple[float, float]:
        return self.p_search if wave == "P" else self.t_search


@dataclass(frozen=True)
class WaveDelineation:
    """Outcome for one wave in one interval; locations are original samples."""
    present: bool
    onset: int
    peak: int
    offset: int


def swt_decompose(signal: Sequence[float], n_scales: int) -> List[np.ndarray]:
    """Undecimated à trous decomposition with the quadratic-spline filter pair.

    At scale s the filters are dilated by 2**(s - 1). The low-pass taps sit at
    offsets (-1, 0, 1, 2) and the high-pass at (0, -1) times the dilation,
    which leaves every detail with the same half-sample lag.

    Args:
        signal: Input samples
        n_scales: Number of detail signals to compute

    Returns:
        One detail vector per scale, each as long as the input.
    """
    approx = np.asarray(signal, dtype=np.float64)
    n = approx.size
    if n_scales < 1 or n <= 2 ** n_scales:
        raise DataError(f"Signal of {n} samples is too short for {n_scales} scales")
    details = []
    for scale in range(1, n_scales + 1):
        step = 2 ** (scale - 1)
        pad = 2 * step
        ext = np.pad(approx, pad, mode="symmetric")

        def tap(offset: int) -> np.ndarray:
            return ext[pad + offset * step:pad + offset * step + n]

        details.append(HIGHPASS_GAIN * (tap(0) - tap(-1)))
        approx = sum(weight * tap(offset) for weight, offset in zip(LOWPASS, (-1, 0, 1, 2)))
    return details


def _window(r_start: int, r_end: int, fractions: Tuple[float, float]) -> Tuple[int, int]:
    span = r_end - r_start
    return r_start + int(np.ceil(fractions[0] * span)), r_start + int(np.floor(fractions[1] * span))


def _interior_maxima(magnitude: np.ndarray) -> np.ndarray:
    inner = magnitude[1:-1]
    return np.flatnonzero((inner >= magnitude[:-2]) & (inner > magnitude[2:]) & (inner > 0)) + 1


def _zero_crossing(detail: np.ndarray, first: int, second: int) -> float:
    for j in range(first, second):
        if detail[j] == 0:
            return float(j)
        if np.sign(detail[j]) != np.sign(detail[j + 1]):
            return j + detail[j] / (detail[j] - detail[j + 1])
    return (first + second) / 2


def _absent(lo: int) -> WaveDelineation:
    return WaveDelineation(False, lo, lo, lo)


def delineate_wave_dwt(record: TimeSeriesRecord, rpeaks: Sequence[int], wave: Wave,
                       cfg: WtConfig | None = None) -> List[WaveDelineation]:
    """Modulus-maxima delineation of one wave in every R-R interval."""
    cfg = cfg or WtConfig()
    rpeaks = _check_rpeaks(record, rpeaks)
    detail = swt_decompose(record.samples, cfg.n_scales)[cfg.analysis_scale - 1]
    results = []
    for r_start, r_end in zip(rpeaks[:-1].tolist(), rpeaks[1:].tolist()):
        lo, hi = _window(r_start, r_end, cfg.window(wave))
        if hi - lo < 2:
            results.append(_absent(lo))
            continue
        segment = detail[lo:hi + 1]
        epsilon = cfg.presence_factor * np.sqrt(np.mean(detail[r_start:r_end + 1] ** 2))
        maxima = _interior_maxima(np.abs(segment))
        best, best_strength = None, 0.0
        for a, b in zip(maxima[:-1], maxima[1:]):
            if np.sign(segment[a]) != np.sign(segment[b]):
                strength = min(abs(segment[a]), abs(segment[b]))
                if strength > best_strength:
                    best, best_strength = (a, b), strength
        if best is None or not best_strength > epsilon:
            results.append(_absent(lo))
            continue
        first, second = best
        crossing = _zero_crossing(segment, first, second)
        peak = lo + int(np.clip(np.floor(crossing), first, second))
        onset_level = cfg.onset_factor * abs(segment[first])
        offset_level = cfg.offset_factor * abs(segment[second])
        onset = lo + first
        while onset > r_start and abs(detail[onset]) >= onset_level:
            onset -= 1
        offset = lo + second
        while offset < r_end and abs(detail[offset]) >= offset_level:
            offset += 1
        results.append(WaveDelineation(True, min(onset, peak), peak, max(offset, peak)))
    return results


def delineate_wave_peak(record: TimeSeriesRecord, rpeaks: Sequence[int], wave: Wave,
                        cfg: WtConfig | None = None) -> List[WaveDelineation]:
    """Windowed extremum search on the band-passed signal."""
    cfg = cfg or WtConfig()
    rpeaks = _check_rpeaks(record, rpeaks)
    high = min(cfg.peak_band[1], 0.45 * record.fs)
    sos = butter(2, [cfg.peak_band[0], high], btype="band", fs=record.fs, output="sos")
    filtered = sosfiltfilt(sos, record.samples)
    guard = int(np.ceil(cfg.qrs_guard * record.fs))
    results = []
    for r_start, r_end in zip(rpeaks[:-1].tolist(), rpeaks[1:].tolist()):
        lo, hi = _window(r_start, r_end, cfg.window(wave))
        # the band-passed Q wave and QRS upslope reach well before the R peak
        if wave == "P":
            hi = min(hi, r_end - guard)
        else:
            lo = max(lo, r_start + guard)
        if hi - lo < 2:
            results.append(_absent(lo))
            continue
        segment = filtered[lo:hi + 1]
        centered = segment - np.median(segment)
        slope = np.sign(np.diff(segment))
        turning = np.flatnonzero(slope[:-1] != slope[1:]) + 1
        threshold = cfg.presence_factor * np.std(filtered[r_start:r_end + 1])
        if turning.size == 0:
            results.append(_absent(lo))
            continue
        index = int(turning[np.argmax(np.abs(centered[turning]))])
        if not abs(centered[index]) > threshold:
            results.append(_absent(lo + index))
            continue
        before = turning[turning < index]
        after = turning[turning > index]
        onset = lo + (int(before[-1]) if before.size else 0)
        offset = lo + (int(after[0]) if after.size else segment.size - 1)
        results.append(WaveDelineation(True, onset, lo + index, offset))
    return results


def _check_rpeaks(record: TimeSeriesRecord, rpeaks: Sequence[int]) -> np.ndarray:
    rpeaks = np.asarray(rpeaks, dtype=np.int64)
    if rpeaks.size < 2:
        raise DataError(f"Delineation needs at least 2 R peaks, got {rpeaks.size}")
    if np.any(np.diff(rpeaks) <= 0) or rpeaks[0] < 0 or rpeaks[-1] >= len(record):
        raise DataError("R peaks must be strictly increasing indices inside the record")
    return rpeaks


class WaveletDelineator:
    """Delineates P and T in every interval with one of the baseline methods."""

    methods = {"DWT": delineate_wave_dwt, "Peak": delineate_wave_peak}

    def __init__(self, method: Literal["DWT", "Peak"] = "DWT", cfg: WtConfig | None = None):
        if method not in self.methods:
            raise ConfigError(f"Unknown baseline method {method!r}, expected one of {sorted(self.methods)}")
        self.name = method
        self.cfg = cfg or WtConfig()

    def delineate(self, record: TimeSeriesRecord, rpeaks: Sequence[int]) -> DelineationResult:
        rpeaks = _check_rpeaks(record, rpeaks)
        per_wave = {wave: self.methods[self.name](record, rpeaks, wave, self.cfg) for wave in WAVE_KINDS}
        intervals = []
        for index, (r_start, r_end) in enumerate(zip(rpeaks[:-1].tolist(), rpeaks[1:].tolist())):
            keypoints = {}
            for wave, kinds in WAVE_KINDS.items():
                found = per_wave[wave][index]
                for kind, location in zip(kinds, (found.onset, found.peak, found.offset)):
                    keypoints[kind] = KeypointEstimate(found.present, int(location), 1.0 if found.present else 0.0)
            intervals.append(IntervalDelineation(r_start, r_end, keypoints))
        logger.debug("%s delineated %d intervals of %s", self.name, len(intervals), record.record_id)
        return DelineationResult(record.record_id, record.fs, tuple(intervals))
