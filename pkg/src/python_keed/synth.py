"""Synthetic single-lead ECG built from Gaussian waves, with exact fiducial truth."""

import json
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Sequence, Tuple

import numpy as np
from scipy.signal import butter, sosfiltfilt

from python_keed.config import ConfigSection, section
from python_keed.core import (
    FiducialAnnotation,
    KeypointKind,
    ReferenceAnnotations,
    TimeSeriesRecord,
    WAVE_KINDS,
)
from python_keed.errors import ConfigError, DataError
from python_keed.heatmap import DecodeConfig, make_target
from python_keed.io.text import write_csv_record
from python_keed.segmenter import DEFAULT_LENGTH, map_to_resampled, split_intervals
from python_keed.utils import round_half_up, str_to_json

logger = logging.getLogger(__name__)

WAVE_ORDER = ("P", "Q", "R", "S", "T")
EXTENT_WIDTHS = 2.5  # onset/offset distance from the center, in widths
SUPPORT_WIDTHS = 10.0
FIBRILLATION_BAND = (4.0, 9.0)
NORMAL, P_ABSENT = "normal", "p_absent"


@dataclass(frozen=True)
class WaveShape:
    """A Gaussian bump: amplitude in mV, center as a fraction of R-R, width (std) in seconds."""
    amplitude: float
    center: float
    width: float


@dataclass(frozen=True)
class BeatTemplate:
    """Beat morphology; negative centers scale with the preceding R-R, positive with the following."""
    waves: Mapping[str, WaveShape] = field(default_factory=lambda: {
        "P": WaveShape(0.15, -0.20, 0.025),
        "Q": WaveShape(-0.10, -0.035, 0.010),
        "R": WaveShape(1.00, 0.0, 0.010),
        "S": WaveShape(-0.20, 0.035, 0.010),
        "T": WaveShape(0.30, 0.375, 0.040),
    })
    rr: float = 0.8
    p_present: bool = True
    t_present: bool = True

    def __post_init__(self):
        if set(self.waves) != set(WAVE_ORDER):
            raise DataError(f"Template needs exactly the waves {WAVE_ORDER}")
        if any(w.width <= 0 for w in self.waves.values()):
            raise DataError("Wave widths must be positive")
        r = self.waves["R"].amplitude
        if any(abs(self.waves[name].amplitude) >= r for name in WAVE_ORDER if name != "R"):
            raise DataError("R amplitude must exceed every other wave's magnitude")
        centers = [self.waves[name].center for name in WAVE_ORDER]
        if self.waves["R"].center != 0 or any(a >= b for a, b in zip(centers, centers[1:])):
            raise DataError("Wave centers must be ordered P < Q < R = 0 < S < T")
        if not self.rr > 0:
            raise DataError(f"rr must be positive, got {self.rr}")

    def jittered(self, rng: np.random.Generator, amount: float) -> "BeatTemplate":
        """Scale amplitudes and widths of the non-R waves by factors in [1 - amount, 1 + amount].

        P and T centers are scaled the same way, so P-R and R-T distances vary between records.
        """
        waves = dict(self.waves)
        for name in ("P", "Q", "S", "T"):
            wave = waves[name]
            waves[name] = replace(wave, amplitude=wave.amplitude * (1 + amount * rng.uniform(-1, 1)),
                                  width=wave.width * (1 + amount * rng.uniform(-1, 1)))
        for name in ("P", "T"):
            waves[name] = replace(waves[name], center=waves[name].center * (1 + amount * rng.uniform(-1, 1)))
        return replace(self, waves=waves)


@dataclass(frozen=True)
class WaveTruth:
    onset: int
    peak: int
    offset: int


@dataclass(frozen=True)
class BeatTruth:
    """Ground truth of one beat; a wave is None when absent."""
    r: int
    p: WaveTruth | None
    t: WaveTruth | None

    def wave(self, name: str) -> WaveTruth | None:
        return self.p if name == "P" else self.t


@dataclass(frozen=True, eq=False)
class SynthRecord:
    """A generated record with its truth.

    Attributes:
        record: The signal
        beats: Per-beat truth, in R order
        episodes: Per-beat label, ``normal`` or ``p_absent``
    """
    record: TimeSeriesRecord
    beats: Tuple[BeatTruth, ...]
    episodes: Tuple[str, ...]

    def __post_init__(self):
        n = len(self.record)
        for beat in self.beats:
            for wave in (beat.p, beat.t):
                if wave is not None and not 0 <= wave.onset < wave.peak < wave.offset < n:
                    raise DataError(f"Wave truth {wave} of beat at {beat.r} falls outside the record")

    @property
    def rpeaks(self) -> np.ndarray:
        return np.array([beat.r for beat in self.beats], dtype=np.int64)

    def reference(self) -> ReferenceAnnotations:
        fiducials = []
        for beat in self.beats:
            for name in ("P", "T"):
                wave = beat.wave(name)
                if wave is None:
                    continue
                onset, peak, offset = WAVE_KINDS[name]
                fiducials.extend([FiducialAnnotation(onset, wave.onset), FiducialAnnotation(peak, wave.peak),
                                  FiducialAnnotation(offset, wave.offset)])
        return ReferenceAnnotations(self.rpeaks, tuple(fiducials))

    def interval_fiducials(self, index: int) -> Dict[KeypointKind, Tuple[bool, int]]:
        """Truth of interval ``index``: T of the opening beat, P of the closing beat."""
        fiducials: Dict[KeypointKind, Tuple[bool, int]] = {}
        for name, beat in (("T", self.beats[index]), ("P", self.beats[index + 1])):
            wave = beat.wave(name)
            for kind, sample in zip(WAVE_KINDS[name], (wave.onset, wave.peak, wave.offset) if wave else (0, 0, 0)):
                fiducials[kind] = (wave is not None, sample)
        return fiducials

    def to_csv(self) -> str:
        return write_csv_record(self.record)

    def truth_json(self) -> str:
        def wave(w: WaveTruth | None):
            return None if w is None else {"on": w.onset, "peak": w.peak, "off": w.offset}
        document = {
            "record_id": self.record.record_id,
            "fs": self.record.fs,
            "beats": [{"r": b.r, "p": wave(b.p), "t": wave(b.t)} for b in self.beats],
            "episodes": list(self.episodes),
        }
        return json.dumps(document, indent=1) + "\n"


def read_truth_json(text: str) -> Tuple[Tuple[BeatTruth, ...], Tuple[str, ...]]:
    """Parse a truth sidecar back into beats and episode labels."""
    def wave(item):
        return None if item is None else WaveTruth(int(item["on"]), int(item["peak"]), int(item["off"]))
    try:
        document = str_to_json(text)
        beats = tuple(BeatTruth(int(b["r"]), wave(b["p"]), wave(b["t"])) for b in document["beats"])
        episodes = tuple(document.get("episodes", [NORMAL] * len(beats)))
    except Exception as err:
        raise DataError(f"Malformed truth document: {err}") from err
    return beats, episodes


def _validate_episodes(episodes: Sequence[Tuple[int, int]], n_beats: int) -> List[Tuple[int, int]]:
    ordered = sorted((int(a), int(b)) for a, b in episodes)
    previous = -1
    for first, last in ordered:
        if not 0 <= first <= last < n_beats:
            raise DataError(f"Episode ({first}, {last}) outside beats 0..{n_beats - 1}")
        if first <= previous:
            raise DataError(f"Episode ({first}, {last}) overlaps a previous episode")
        previous = last
    return ordered


def _fibrillation(rng: np.random.Generator, n: int, fs: float, peak: float) -> np.ndarray:
    noise = rng.standard_normal(n + 64)
    sos = butter(2, FIBRILLATION_BAND, btype="band", fs=fs, output="sos")
    segment = sosfiltfilt(sos, noise)[32:32 + n] * np.hanning(n)
    top = np.max(np.abs(segment))
    return segment * (peak / top) if top > 0 else segment


def gaussian(n: int, amplitude: float, center: float, width: float) -> np.ndarray:
    """Sample ``amplitude * exp(-(i - center)^2 / (2 width^2))`` for i in [0, n), widths in samples."""
    return amplitude * np.exp(-((np.arange(n) - center) ** 2) / (2 * width ** 2))


def gen_record(n_beats: int, fs: float = 250.0, rr_mean: float = 0.8, rr_jitter: float = 0.0,
               p_dropout_episodes: Sequence[Tuple[int, int]] = (), noise_snr_db: float | None = None,
               seed: int = 0, template: BeatTemplate | None = None, fib_level: float = 0.1,
               record_id: str = "synth") -> SynthRecord:
    """Generate a record of ``n_beats`` beats.

    Args:
        n_beats: Number of R peaks (at least 2)
        fs: Sampling rate, at least 100 Hz
        rr_mean: Mean R-R in seconds; the first R sits at this time
        rr_jitter: Per-beat R-R variation, as a fraction of rr_mean
        p_dropout_episodes: Inclusive beat ranges whose P waves become fibrillatory noise
        noise_snr_db: Additive white-noise SNR; None disables noise
        seed: Fully determines jitter, fibrillation and noise
        template: Beat morphology
        fib_level: Fibrillation peak as a fraction of the P amplitude (at most 0.2)
        record_id: Label of the produced record

    Returns:
        The record and its truth.
    """
    if n_beats < 2:
        raise DataError(f"n_beats must be at least 2, got {n_beats}")
    if fs < 100:
        raise DataError(f"fs must be at least 100 Hz, got {fs}")
    if not rr_mean > 0 or not 0 <= rr_jitter < 1:
        raise DataError(f"Degenerate rhythm: rr_mean={rr_mean}, rr_jitter={rr_jitter}")
    if not 0 <= fib_level <= 0.2:
        raise DataError(f"fib_level must lie in [0, 0.2], got {fib_level}")
    template = template or BeatTemplate(rr=rr_mean)
    episodes = _validate_episodes(p_dropout_episodes, n_beats)
    rng = np.random.default_rng(seed)

    rr_nominal = round_half_up(rr_mean * fs)
    rr = np.array([round_half_up(rr_mean * (1 + rr_jitter * u) * fs) for u in rng.uniform(-1, 1, n_beats - 1)],
                  dtype=np.int64)
    rpeaks = rr_nominal + np.concatenate([[0], np.cumsum(rr)])
    n = int(rpeaks[-1]) + rr_nominal
    preceding = np.concatenate([[rr_nominal], rr])
    following = np.concatenate([rr, [rr_nominal]])

    labels = [NORMAL] * n_beats
    for first, last in episodes:
        labels[first:last + 1] = [P_ABSENT] * (last - first + 1)

    signal = np.zeros(n)
    beats = []
    for i, r in enumerate(rpeaks.tolist()):
        truths: Dict[str, WaveTruth | None] = {}
        for name in WAVE_ORDER:
            wave = template.waves[name]
            span = preceding[i] if wave.center < 0 else following[i]
            center = r + wave.center * span
            width = wave.width * fs
            skip = (name == "P" and (labels[i] == P_ABSENT or not template.p_present)) or \
                   (name == "T" and not template.t_present)
            if not skip:
                lo = max(0, int(center - SUPPORT_WIDTHS * width))
                hi = min(n, int(center + SUPPORT_WIDTHS * width) + 1)
                signal[lo:hi] += gaussian(hi - lo, wave.amplitude, center - lo, width)
            if name in ("P", "T"):
                truths[name] = None if skip else WaveTruth(
                    round_half_up(center - EXTENT_WIDTHS * width), round_half_up(center),
                    round_half_up(center + EXTENT_WIDTHS * width))
        if labels[i] == P_ABSENT and fib_level > 0:
            start = int(rpeaks[i - 1]) if i > 0 else 0
            signal[start:r + 1] += _fibrillation(rng, r + 1 - start, fs, fib_level * template.waves["P"].amplitude)
        beats.append(BeatTruth(r, truths["P"], truths["T"]))

    if noise_snr_db is not None:
        noise_std = np.sqrt(np.mean(signal ** 2) / 10 ** (noise_snr_db / 10))
        signal = signal + rng.normal(0.0, noise_std, n)
    logger.debug("Generated %s: %d beats, %d samples, %d P-absent", record_id, n_beats, n, labels.count(P_ABSENT))
    return SynthRecord(TimeSeriesRecord(signal, fs, record_id=record_id, lead="synthetic"), tuple(beats), tuple(labels))


@section("synth", "synthetic")
@dataclass(frozen=True)
class SynthConfig(ConfigSection):
    """Synthetic corpus settings.

    Attributes:
        n_records: Records in the corpus
        n_beats: Beats per record
        fs: Sampling rate in Hz
        rr_mean: Mean R-R in seconds
        rr_jitter: Per-beat R-R variation fraction
        morphology_jitter: Per-record variation fraction of wave amplitudes, widths and P/T positions
        episode_fraction: Share of each record's beats inside its P-absent episode
        fib_level: Fibrillation peak relative to the P amplitude
        noise_snr_db: Additive noise SNR, or null for clean records
        seed: Corpus seed
    """
    n_records: int = field(default=4, metadata={"name": ["n_records", "records"], "type": "int"})
    n_beats: int = field(default=100, metadata={"name": ["n_beats", "beats"], "type": "int"})
    fs: float = field(default=250.0, metadata={"name": ["fs"], "type": "float"})
    rr_mean: float = field(default=0.8, metadata={"name": ["rr_mean"], "type": "float"})
    rr_jitter: float = field(default=0.1, metadata={"name": ["rr_jitter"], "type": "float"})
    morphology_jitter: float = field(default=0.1, metadata={"name": ["morphology_jitter"], "type": "float"})
    episode_fraction: float = field(default=0.25, metadata={"name": ["episode_fraction"], "type": "float"})
    fib_level: float = field(default=0.1, metadata={"name": ["fib_level"], "type": "float"})
    noise_snr_db: float | None = field(default=None, metadata={"name": ["noise_snr_db", "snr"], "type": "optional_float"})
    seed: int = field(default=0, metadata={"name": ["seed"], "type": "int"})

    def __post_init__(self):
        if self.n_records < 1 or self.n_beats < 2:
            raise ConfigError("A corpus needs at least one record of at least two beats")
        if not 0 <= self.episode_fraction < 1:
            raise ConfigError(f"episode_fraction must lie in [0, 1), got {self.episode_fraction}")
        if not 0 <= self.morphology_jitter < 0.5:
            raise ConfigError(f"morphology_jitter must lie in [0, 0.5), got {self.morphology_jitter}")
        if not 0 <= self.fib_level <= 0.2:
            raise ConfigError(f"fib_level must lie in [0, 0.2], got {self.fib_level}")


def generate_corpus(cfg: SynthConfig) -> List[SynthRecord]:
    """One record per child seed, each with jittered morphology and one P-absent episode."""
    records = []
    for index, child in enumerate(np.random.SeedSequence(cfg.seed).spawn(cfg.n_records)):
        rng = np.random.default_rng(child)
        template = BeatTemplate(rr=cfg.rr_mean).jittered(rng, cfg.morphology_jitter)
        length = round_half_up(cfg.episode_fraction * cfg.n_beats)
        episodes = []
        if length:
            first = int(rng.integers(1, cfg.n_beats - length + 1))
            episodes.append((first, first + length - 1))
        records.append(gen_record(
            cfg.n_beats, cfg.fs, cfg.rr_mean, cfg.rr_jitter, episodes, cfg.noise_snr_db,
            seed=int(rng.integers(2 ** 31)), template=template, fib_level=cfg.fib_level,
            record_id=f"synth{cfg.seed:03d}_{index:03d}"))
    return records


def to_training_set(records: Sequence[SynthRecord], length: int = DEFAULT_LENGTH,
                    cfg: DecodeConfig | None = None) -> List[Tuple[np.ndarray, np.ndarray]]:
    """Split every record on its true R peaks and pair each interval with its target heatmaps."""
    cfg = cfg or DecodeConfig()
    pairs = []
    for synth in records:
        for index, interval in enumerate(split_intervals(synth.record, synth.rpeaks, length)):
            fiducials = {
                kind: (present, map_to_resampled(interval.r_start, interval.r_end, sample, length) if present else 0)
                for kind, (present, sample) in synth.interval_fiducials(index).items()
            }
            pairs.append((interval.values, make_target(fiducials, cfg, length)))
    return pairs


def stack_pairs(pairs: Sequence[Tuple[np.ndarray, np.ndarray]]) -> Tuple[np.ndarray, np.ndarray]:
    if not pairs:
        raise DataError("No training pairs")
    return np.stack([p[0] for p in pairs]), np.stack([p[1] for p in pairs])
