"""R-R interval segmentation, fixed-length resampling and coordinate mapping."""

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from python_keed.core import TimeSeriesRecord
from python_keed.errors import DataError
from python_keed.utils import round_half_up

DEFAULT_LENGTH = 256


@dataclass(frozen=True, eq=False)
class BeatInterval:
    """One R-R segment.

    Attributes:
        r_start: Opening R peak (original samples)
        r_end: Closing R peak, inclusive
        values: Resampled, normalized vector of the model's input length
    """
    r_start: int
    r_end: int
    values: np.ndarray

    def __post_init__(self):
        if self.r_end <= self.r_start:
            raise DataError(f"Interval end {self.r_end} must follow its start {self.r_start}")
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 2 or not np.all(np.isfinite(values)):
            raise DataError("Interval values must be a finite vector of length >= 2")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def raw_len(self) -> int:
        return self.r_end - self.r_start + 1

    @property
    def length(self) -> int:
        return self.values.size


def resample_to_length(segment: Sequence[float], length: int) -> np.ndarray:
    """Linearly interpolate onto ``length`` points spanning the segment end to end."""
    segment = np.asarray(segment, dtype=np.float64)
    if segment.size < 2 or length < 2:
        raise DataError(f"Cannot resample {segment.size} samples to length {length}")
    if segment.size == length:
        return segment.copy()
    grid = np.arange(length) * ((segment.size - 1) / (length - 1))
    resampled = np.interp(grid, np.arange(segment.size), segment)
    resampled[-1] = segment[-1]
    return resampled


def normalize(values: Sequence[float]) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        raise DataError("Normalization needs at least two values")
    variance = values.var()
    if variance < 1e-12:
        return np.zeros_like(values)
    return (values - values.mean()) / math.sqrt(variance)


def split_intervals(record: TimeSeriesRecord, rpeaks: Sequence[int], length: int = DEFAULT_LENGTH) -> List[BeatInterval]:
    """Cut the record at consecutive R peaks; both boundary samples belong to the interval.

    Samples before the first and after the last peak are discarded.
    """
    rpeaks = np.asarray(rpeaks, dtype=np.int64)
    if rpeaks.size < 2:
        raise DataError(f"Segmentation needs at least 2 R peaks, got {rpeaks.size}")
    if np.any(np.diff(rpeaks) <= 0):
        raise DataError("R peaks must be strictly increasing")
    if rpeaks[0] < 0 or rpeaks[-1] >= len(record):
        raise DataError(f"R peaks must lie within the record (0..{len(record) - 1})")
    intervals = []
    for start, end in zip(rpeaks[:-1].tolist(), rpeaks[1:].tolist()):
        segment = record.samples[start:end + 1]
        intervals.append(BeatInterval(start, end, normalize(resample_to_length(segment, length))))
    return intervals


def map_to_original(interval: BeatInterval, resampled_index: int) -> int:
    length = interval.length
    if not 0 <= resampled_index <= length - 1:
        raise DataError(f"Resampled index {resampled_index} outside [0, {length - 1}]")
    return interval.r_start + round_half_up(resampled_index * (interval.raw_len - 1) / (length - 1))


def map_to_resampled(r_start: int, r_end: int, sample_index: int, length: int = DEFAULT_LENGTH) -> int:
    """Inverse of map_to_original for a sample inside [r_start, r_end]."""
    if not r_start <= sample_index <= r_end:
        raise DataError(f"Sample {sample_index} lies outside [{r_start}, {r_end}]")
    return round_half_up((sample_index - r_start) * (length - 1) / (r_end - r_start))
