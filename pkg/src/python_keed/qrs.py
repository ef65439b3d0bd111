"""Pan-Tompkins R-peak detection at arbitrary sampling rates."""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.signal import butter, find_peaks, sosfiltfilt

from python_keed.config import ConfigSection, section
from python_keed.core import TimeSeriesRecord
from python_keed.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

MIN_FS = 100.0
EDGE_SECONDS = 0.2
REFINE_SECONDS = 0.05
LEARNING_SECONDS = 2.0
DERIVATIVE_TAPS = np.array([1.0, 2.0, 0.0, -2.0, -1.0]) / 8.0


@section("qrs", "detector")
@dataclass(frozen=True)
class QrsConfig(ConfigSection):
    """Pan-Tompkins detector settings.

    Attributes:
        band_low: Band-pass lower corner in Hz
        band_high: Band-pass upper corner in Hz
        integration_window: Moving-window integration length in seconds
        refractory: Minimum spacing of accepted peaks in seconds
        twave_window: Window after a beat in which a slope test rejects T waves
        searchback: Whether missed beats are searched for at half threshold
    """
    band_low: float = field(default=5.0, metadata={"name": ["band_low"], "type": "float"})
    band_high: float = field(default=15.0, metadata={"name": ["band_high"], "type": "float"})
    integration_window: float = field(default=0.150, metadata={"name": ["integration_window"], "type": "float"})
    refractory: float = field(default=0.200, metadata={"name": ["refractory"], "type": "float"})
    twave_window: float = field(default=0.360, metadata={"name": ["twave_window"], "type": "float"})
    searchback: bool = field(default=True, metadata={"name": ["searchback"], "type": "bool"})

    def __post_init__(self):
        if not 0 < self.band_low < self.band_high:
            raise ConfigError(f"Band-pass corners must satisfy 0 < low < high, got {self.band_low}, {self.band_high}")
        for name in ("integration_window", "refractory", "twave_window"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")


def bandpass(samples: np.ndarray, fs: float, cfg: QrsConfig) -> np.ndarray:
    if cfg.band_high >= fs / 2:
        raise ConfigError(f"band_high {cfg.band_high} Hz must lie below Nyquist ({fs / 2} Hz)")
    sos = butter(2, [cfg.band_low, cfg.band_high], btype="band", fs=fs, output="sos")
    return sosfiltfilt(sos, samples)


def _integrate(filtered: np.ndarray, fs: float, cfg: QrsConfig) -> tuple[np.ndarray, np.ndarray]:
    derivative = np.convolve(filtered, DERIVATIVE_TAPS * fs, mode="same")
    window = max(1, int(round(cfg.integration_window * fs)))
    integrated = np.convolve(derivative ** 2, np.ones(window) / window, mode="same")
    return derivative, integrated


@dataclass
class _Thresholds:
    spki: float
    npki: float

    @property
    def primary(self) -> float:
        return self.npki + 0.25 * (self.spki - self.npki)

    @property
    def secondary(self) -> float:
        return 0.5 * self.primary


def _max_slope(derivative: np.ndarray, index: int, half_width: int) -> float:
    return float(np.max(np.abs(derivative[max(0, index - half_width):index + half_width + 1])))


def detect_rpeaks(record: TimeSeriesRecord, cfg: QrsConfig | None = None) -> np.ndarray:
    """Locate R peaks with band-pass, derivative, squaring and moving-window integration.

    Args:
        record: Input ECG, at least two seconds long, sampled at 100 Hz or more
        cfg: Detector settings

    Returns:
        Strictly increasing R-peak sample indices, refined to the band-passed maximum.
    """
    cfg = cfg or QrsConfig()
    fs = record.fs
    if fs < MIN_FS:
        raise DataError(f"Sampling rate {fs} Hz is below the detector minimum of {MIN_FS} Hz")
    if len(record) < 2 * fs:
        raise DataError(f"Record {record.record_id!r} is shorter than 2 s ({len(record)} samples at {fs} Hz)")

    filtered = bandpass(record.samples, fs, cfg)
    derivative, integrated = _integrate(filtered, fs, cfg)
    if not np.max(integrated) > 0:
        logger.debug("Record %s carries no QRS energy", record.record_id)
        return np.array([], dtype=np.int64)

    refractory = max(1, int(round(cfg.refractory * fs)))
    twave = int(round(cfg.twave_window * fs))
    edge = int(round(EDGE_SECONDS * fs))
    half_window = max(1, int(round(cfg.integration_window * fs / 2)))

    candidates, _ = find_peaks(integrated, distance=refractory)
    candidates = candidates[(candidates >= edge) & (candidates < len(record) - edge)]

    learning = integrated[:int(LEARNING_SECONDS * fs)]
    levels = _Thresholds(spki=0.25 * float(np.max(learning)), npki=0.5 * float(np.mean(learning)))

    accepted: List[int] = []
    slopes: List[float] = []
    pending: List[int] = []
    for index in candidates:
        index = int(index)
        if cfg.searchback and len(accepted) >= 2:
            rr_mean = float(np.mean(np.diff(accepted[-9:])))
            if index - accepted[-1] > 1.66 * rr_mean:
                eligible = [c for c in pending if c - accepted[-1] >= refractory and integrated[c] >= levels.secondary]
                if eligible:
                    missed = max(eligible, key=lambda c: integrated[c])
                    levels.spki = 0.25 * float(integrated[missed]) + 0.75 * levels.spki
                    accepted.append(missed)
                    slopes.append(_max_slope(derivative, missed, half_window))
                    pending = [c for c in pending if c > missed]

        value = float(integrated[index])
        if value < levels.primary:
            levels.npki = 0.125 * value + 0.875 * levels.npki
            pending.append(index)
            continue
        if accepted and index - accepted[-1] < refractory:
            continue
        slope = _max_slope(derivative, index, half_window)
        if accepted and index - accepted[-1] < twave and slope < 0.5 * slopes[-1]:
            levels.npki = 0.125 * value + 0.875 * levels.npki
            pending.append(index)
            continue
        levels.spki = 0.125 * value + 0.875 * levels.spki
        accepted.append(index)
        slopes.append(slope)
        pending = []

    peaks = _refine(np.abs(filtered), accepted, int(round(REFINE_SECONDS * fs)), refractory)
    logger.debug("Detected %d R peaks in %s", peaks.size, record.record_id)
    return peaks


def _refine(magnitude: np.ndarray, detections: List[int], radius: int, refractory: int) -> np.ndarray:
    refined: List[int] = []
    for index in detections:
        lo = max(0, index - radius)
        hi = min(magnitude.size, index + radius + 1)
        peak = lo + int(np.argmax(magnitude[lo:hi]))
        if refined and peak - refined[-1] < refractory:
            if magnitude[peak] > magnitude[refined[-1]]:
                refined[-1] = peak
            continue
        refined.append(peak)
    return np.array(refined, dtype=np.int64)
