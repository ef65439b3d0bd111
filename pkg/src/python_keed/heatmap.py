"""Gaussian target heatmaps and thresholded keypoint decoding."""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np

from python_keed.config import ConfigSection, section
from python_keed.core import K, IntervalDelineation, KeypointEstimate, KeypointKind
from python_keed.errors import ConfigError, DataError, ShapeError
from python_keed.segmenter import BeatInterval, map_to_original


@section("decode", "heatmap")
@dataclass(frozen=True)
class DecodeConfig(ConfigSection):
    """Heatmap encoding and presence-threshold settings.

    Attributes:
        lam: Presence threshold λ applied to each channel's maximum
        sigma: Target Gaussian width in resampled samples
        lambda_overrides: Per-kind thresholds keyed by kind name (e.g. ``{"PPeak": 0.5}``)
    """
    lam: float = field(default=0.4, metadata={"name": ["lambda", "lam"], "type": "float"})
    sigma: float = field(default=3.0, metadata={"name": ["sigma"], "type": "float"})
    lambda_overrides: Mapping[str, float] = field(
        default_factory=dict, metadata={"name": ["lambda_overrides"], "type": "float_map"})

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ConfigError(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.sigma > 0:
            raise ConfigError(f"sigma must be positive, got {self.sigma}")
        for name, value in self.lambda_overrides.items():
            if name not in KeypointKind.__members__:
                raise ConfigError(f"Unknown keypoint kind {name!r} in lambda_overrides")
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"lambda override for {name} must lie in [0, 1], got {value}")

    def threshold(self, kind: KeypointKind) -> float:
        return self.lambda_overrides.get(KeypointKind(kind).name, self.lam)


def make_target(fiducials: Mapping[KeypointKind, Tuple[bool, int]], cfg: DecodeConfig, length: int,
                n_kinds: int = K) -> np.ndarray:
    """Build a ``n_kinds x length`` target; present kinds get a unit-peak Gaussian.

    Args:
        fiducials: Per kind, (present, resampled index); kinds not listed are absent
        cfg: Supplies sigma
        length: Resampled interval length
        n_kinds: Number of channels

    Returns:
        The target heatmap set.
    """
    target = np.zeros((n_kinds, length))
    grid = np.arange(length)
    for kind, (present, index) in fiducials.items():
        kind = int(kind)
        if not 0 <= kind < n_kinds:
            raise ShapeError(f"Keypoint channel {kind} outside 0..{n_kinds - 1}")
        if not present:
            continue
        if not 0 <= index <= length - 1:
            raise DataError(f"Fiducial index {index} outside [0, {length - 1}]")
        target[kind] = np.exp(-((grid - index) ** 2) / (2 * cfg.sigma ** 2))
    return target


def decode_presence(heatmaps: np.ndarray, cfg: DecodeConfig) -> np.ndarray:
    """Per-channel presence flags; works on a single ``K x L`` set or a batch."""
    heatmaps = np.asarray(heatmaps)
    confidence = heatmaps.max(axis=-1)
    thresholds = np.array([cfg.threshold(KeypointKind(k)) for k in range(heatmaps.shape[-2])])
    return confidence >= thresholds


def decode_keypoints(heatmaps: np.ndarray, interval: BeatInterval, cfg: DecodeConfig) -> Dict[KeypointKind, KeypointEstimate]:
    heatmaps = np.asarray(heatmaps, dtype=np.float64)
    if heatmaps.ndim != 2 or heatmaps.shape[1] != interval.length:
        raise ShapeError(f"Heatmaps of shape {heatmaps.shape} do not match interval length {interval.length}")
    if np.any(heatmaps < 0) or np.any(heatmaps > 1):
        raise DataError("Heatmap entries must lie in [0, 1]")
    confidence = heatmaps.max(axis=1)
    peaks = heatmaps.argmax(axis=1)
    present = decode_presence(heatmaps, cfg)
    return {
        KeypointKind(k): KeypointEstimate(
            present=bool(present[k]),
            location=map_to_original(interval, int(peaks[k])),
            confidence=float(confidence[k]),
        )
        for k in range(heatmaps.shape[0])
    }


def decode_batch(heatmaps: np.ndarray, intervals: Sequence[BeatInterval], cfg: DecodeConfig) -> List[IntervalDelineation]:
    if len(heatmaps) != len(intervals):
        raise ShapeError(f"{len(heatmaps)} heatmap sets for {len(intervals)} intervals")
    return [
        IntervalDelineation(interval.r_start, interval.r_end, decode_keypoints(maps, interval, cfg))
        for maps, interval in zip(heatmaps, intervals)
    ]
