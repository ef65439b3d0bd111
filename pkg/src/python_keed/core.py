"""Shared domain types and coordinate conventions.

Original-signal coordinates are integer sample indices; times in seconds
are derived as ``index / fs`` and never stored.
"""

from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterable, Literal, Mapping, Tuple

import numpy as np

from python_keed.errors import DataError

Wave = Literal["P", "T"]


class KeypointKind(IntEnum):
    """Keypoint channels emitted by the model, in stable ordinal order."""
    POn = 0
    PPeak = 1
    POff = 2
    TOn = 3
    TPeak = 4
    TOff = 5

    @property
    def wave(self) -> Wave:
        return "P" if self < KeypointKind.TOn else "T"


K = len(KeypointKind)

# onset, peak, offset per wave
WAVE_KINDS: Dict[Wave, Tuple[KeypointKind, KeypointKind, KeypointKind]] = {
    "P": (KeypointKind.POn, KeypointKind.PPeak, KeypointKind.POff),
    "T": (KeypointKind.TOn, KeypointKind.TPeak, KeypointKind.TOff),
}


def peak_kind(wave: Wave) -> KeypointKind:
    if wave not in WAVE_KINDS:
        raise DataError(f"Unknown wave {wave!r}, expected one of {sorted(WAVE_KINDS)}")
    return WAVE_KINDS[wave][1]


@dataclass(frozen=True, eq=False)
class TimeSeriesRecord:
    """A sampled single-lead ECG in physical units.

    Attributes:
        samples: Signal values (e.g. millivolts), read-only float64 array
        fs: Sampling rate in Hz
        record_id: Provenance label
        lead: Lead name
    """
    samples: np.ndarray
    fs: float
    record_id: str = "record"
    lead: str = ""

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if not self.fs > 0:
            raise DataError(f"Sampling rate must be positive, got {self.fs}")
        if samples.size < 1:
            raise DataError("A record needs at least one sample")
        if not np.all(np.isfinite(samples)):
            raise DataError(f"Record {self.record_id!r} contains non-finite samples")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "fs", float(self.fs))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.fs

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeSeriesRecord):
            return NotImplemented
        return (self.fs == other.fs and self.record_id == other.record_id and self.lead == other.lead
                and np.array_equal(self.samples, other.samples))


@dataclass(frozen=True)
class FiducialAnnotation:
    """A wave landmark in original-signal coordinates.

    When ``present`` is false the index carries no meaning.
    """
    kind: KeypointKind
    sample_index: int
    present: bool = True

    def __post_init__(self):
        object.__setattr__(self, "kind", KeypointKind(self.kind))
        if self.present and self.sample_index < 0:
            raise DataError(f"Negative sample index {self.sample_index} for {self.kind.name}")


@dataclass(frozen=True)
class KeypointEstimate:
    present: bool
    location: int
    confidence: float

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise DataError(f"Confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class IntervalDelineation:
    """Keypoint estimates for one R-R interval, in original coordinates."""
    r_start: int
    r_end: int
    keypoints: Mapping[KeypointKind, KeypointEstimate] = field(default_factory=dict)

    def __post_init__(self):
        if self.r_end <= self.r_start:
            raise DataError(f"Interval end {self.r_end} must follow its start {self.r_start}")
        for kind, estimate in self.keypoints.items():
            if estimate.present and not self.r_start <= estimate.location <= self.r_end:
                raise DataError(
                    f"{KeypointKind(kind).name} at {estimate.location} lies outside [{self.r_start}, {self.r_end}]")

    def estimate(self, kind: KeypointKind) -> KeypointEstimate | None:
        return self.keypoints.get(kind)

    def present(self, kind: KeypointKind) -> bool:
        estimate = self.keypoints.get(kind)
        return estimate is not None and estimate.present


@dataclass(frozen=True)
class DelineationResult:
    """Per-interval delineation of one record."""
    record_id: str
    fs: float
    intervals: Tuple[IntervalDelineation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "intervals", tuple(self.intervals))

    def presence(self, kind: KeypointKind) -> np.ndarray:
        return np.array([interval.present(kind) for interval in self.intervals], dtype=bool)

    def present_count(self, kinds: Iterable[KeypointKind] | None = None) -> int:
        kinds = list(KeypointKind) if kinds is None else list(kinds)
        return sum(interval.present(kind) for interval in self.intervals for kind in kinds)


@dataclass(frozen=True, eq=False)
class ReferenceAnnotations:
    """Ground-truth R peaks and wave fiducials of one record.

    Attributes:
        rpeaks: Sorted R-peak sample indices
        fiducials: Wave landmarks (present ones only are used for scoring)
    """
    rpeaks: np.ndarray
    fiducials: Tuple[FiducialAnnotation, ...] = ()

    def __post_init__(self):
        rpeaks = np.asarray(self.rpeaks, dtype=np.int64).reshape(-1)
        if rpeaks.size > 1 and np.any(np.diff(rpeaks) <= 0):
            raise DataError("Reference R peaks must be strictly increasing")
        rpeaks.setflags(write=False)
        object.__setattr__(self, "rpeaks", rpeaks)
        object.__setattr__(self, "fiducials", tuple(sorted(self.fiducials, key=lambda f: (f.sample_index, f.kind))))

    def peaks_of(self, kind: KeypointKind) -> np.ndarray:
        return np.array([f.sample_index for f in self.fiducials if f.kind == kind and f.present], dtype=np.int64)
