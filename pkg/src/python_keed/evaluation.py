"""Presence confusion, accuracy metrics, peak error, λ sweeps and timing."""

import json
import logging
import statistics
import time
from dataclasses import asdict, dataclass, field
from typing import List, Protocol, Sequence, Tuple

import numpy as np

from python_keed.core import DelineationResult, KeypointKind, ReferenceAnnotations, TimeSeriesRecord, Wave, peak_kind
from python_keed.errors import DataError

logger = logging.getLogger(__name__)

ALIGN_TOLERANCE = 0.15  # seconds between detector and reference R peaks


@dataclass(frozen=True)
class ConfusionCounts:
    """Interval counts with positive = wave present."""
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise DataError(f"Negative confusion count in {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def predicted_present(self) -> int:
        return self.tp + self.fp

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    def swapped(self) -> "ConfusionCounts":
        """Exchange the FP and FN labels, for reports using the inverted naming."""
        return ConfusionCounts(self.tp, self.fn, self.fp, self.tn)


@dataclass(frozen=True)
class Metrics:
    """Ratios in [0, 1]; None where the denominator is zero."""
    accuracy: float
    sensitivity: float | None
    specificity: float | None


def confusion(truth: Sequence[bool], pred: Sequence[bool]) -> ConfusionCounts:
    truth = np.asarray(truth, dtype=bool)
    pred = np.asarray(pred, dtype=bool)
    if truth.shape != pred.shape:
        raise DataError(f"Truth ({truth.size}) and prediction ({pred.size}) lengths differ")
    return ConfusionCounts(
        tp=int(np.sum(truth & pred)),
        fp=int(np.sum(~truth & pred)),
        fn=int(np.sum(truth & ~pred)),
        tn=int(np.sum(~truth & ~pred)),
    )


def metrics(counts: ConfusionCounts) -> Metrics:
    if counts.total == 0:
        raise DataError("Cannot compute metrics of empty counts")
    positives = counts.tp + counts.fn
    negatives = counts.tn + counts.fp
    return Metrics(
        accuracy=(counts.tp + counts.tn) / counts.total,
        sensitivity=counts.tp / positives if positives else None,
        specificity=counts.tn / negatives if negatives else None,
    )


def peak_error(truth_locations: Sequence[int], pred_locations: Sequence[int],
               truth_present: Sequence[bool], pred_present: Sequence[bool]) -> float | None:
    """Mean absolute sample distance over intervals where both truth and prediction are present."""
    truth_locations = np.asarray(truth_locations, dtype=np.int64)
    pred_locations = np.asarray(pred_locations, dtype=np.int64)
    both = np.asarray(truth_present, dtype=bool) & np.asarray(pred_present, dtype=bool)
    if not (truth_locations.shape == pred_locations.shape == both.shape):
        raise DataError("Location and presence sequences must be aligned")
    if not np.any(both):
        return None
    return float(np.mean(np.abs(pred_locations[both] - truth_locations[both])))


@dataclass(frozen=True, eq=False)
class HeatmapCache:
    """Per-interval channel maxima, enough to re-threshold without re-running the model."""
    confidence: np.ndarray  # (N, K)

    @classmethod
    def from_heatmaps(cls, heatmaps: np.ndarray) -> "HeatmapCache":
        heatmaps = np.asarray(heatmaps)
        if heatmaps.ndim != 3:
            raise DataError(f"Expected (N, K, L) heatmaps, got shape {heatmaps.shape}")
        return cls(heatmaps.max(axis=2))

    @classmethod
    def concatenate(cls, caches: Sequence["HeatmapCache"]) -> "HeatmapCache":
        return cls(np.concatenate([c.confidence for c in caches], axis=0))

    def presence(self, kind: KeypointKind, lam: float) -> np.ndarray:
        return self.confidence[:, int(kind)] >= lam


def lambda_sweep(cache: HeatmapCache, truth: Sequence[bool], lambdas: Sequence[float],
                 kind: KeypointKind = KeypointKind.PPeak) -> List[Tuple[float, ConfusionCounts]]:
    return [(float(lam), confusion(truth, cache.presence(kind, lam))) for lam in lambdas]


def sweep_csv(sweep: Sequence[Tuple[float, ConfusionCounts]]) -> str:
    lines = ["lambda,tp,fp,fn,tn"]
    lines.extend(f"{lam!r},{c.tp},{c.fp},{c.fn},{c.tn}" for lam, c in sweep)
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class AlignedPresence:
    """Scored intervals of one record for one wave."""
    truth_present: np.ndarray
    pred_present: np.ndarray
    truth_location: np.ndarray
    pred_location: np.ndarray
    scored: np.ndarray  # indices into the result's intervals
    excluded: int


def align(result: DelineationResult, reference: ReferenceAnnotations, wave: Wave,
          tolerance: float = ALIGN_TOLERANCE) -> AlignedPresence:
    """Match predicted intervals to reference intervals.

    An interval is scored when both bounds lie within ``tolerance`` seconds of
    reference R peaks; the truth wave is the first reference peak annotation
    inside the reference interval.
    """
    kind = peak_kind(wave)
    ref_r = reference.rpeaks
    ref_peaks = reference.peaks_of(kind)
    limit = tolerance * result.fs
    truth_present, pred_present, truth_loc, pred_loc, scored = [], [], [], [], []
    excluded = 0
    for index, interval in enumerate(result.intervals):
        if ref_r.size < 2:
            excluded += 1
            continue
        start = int(np.argmin(np.abs(ref_r - interval.r_start)))
        end = int(np.argmin(np.abs(ref_r - interval.r_end)))
        if (end != start + 1 or abs(ref_r[start] - interval.r_start) > limit
                or abs(ref_r[end] - interval.r_end) > limit):
            excluded += 1
            continue
        inside = ref_peaks[(ref_peaks >= ref_r[start]) & (ref_peaks <= ref_r[end])]
        estimate = interval.estimate(kind)
        truth_present.append(inside.size > 0)
        truth_loc.append(int(inside[0]) if inside.size else 0)
        pred_present.append(bool(estimate and estimate.present))
        pred_loc.append(estimate.location if estimate else interval.r_start)
        scored.append(index)
    if excluded:
        logger.info("Excluded %d of %d intervals of %s from scoring", excluded, len(result.intervals), result.record_id)
    return AlignedPresence(np.array(truth_present, dtype=bool), np.array(pred_present, dtype=bool),
                           np.array(truth_loc, dtype=np.int64), np.array(pred_loc, dtype=np.int64),
                           np.array(scored, dtype=np.int64), excluded)


class Delineator(Protocol):
    name: str

    def delineate(self, record: TimeSeriesRecord, rpeaks: Sequence[int]) -> DelineationResult:
        ...


@dataclass(frozen=True)
class BenchmarkResult:
    method: str
    seconds: float
    intervals: int
    throughput: float
    deterministic: bool
    repeats: int


def benchmark(method: Delineator, items: Sequence[Tuple[TimeSeriesRecord, Sequence[int]]],
              repeats: int = 3) -> BenchmarkResult:
    """Median wall time over ``repeats`` of delineating every (record, R peaks) item.

    Args:
        method: Anything with ``name`` and ``delineate(record, rpeaks)``
        items: Pre-loaded records with their R peaks
        repeats: Timed repetitions (at least 1)

    Returns:
        Timing, throughput in intervals per second and whether every repeat
        produced identical results.
    """
    if repeats < 1:
        raise DataError(f"repeats must be at least 1, got {repeats}")
    timings = []
    outputs = None
    deterministic = True
    for _ in range(repeats):
        start = time.perf_counter()
        results = [method.delineate(record, rpeaks) for record, rpeaks in items]
        timings.append(time.perf_counter() - start)
        if outputs is None:
            outputs = results
        elif results != outputs:
            deterministic = False
    seconds = statistics.median(timings)
    intervals = sum(len(result.intervals) for result in outputs)
    logger.info("%s: %.4f s median over %d repeats, %d intervals", method.name, seconds, repeats, intervals)
    return BenchmarkResult(method.name, seconds, intervals, intervals / seconds if seconds > 0 else float("inf"),
                           deterministic, repeats)


@dataclass(frozen=True)
class MethodReport:
    """One row of the comparison table.

    ``speedup`` is this method's time divided by the first benchmarked method's (KEED in ``keed bench``).
    """
    method: str
    counts: ConfusionCounts
    accuracy: float | None
    sensitivity: float | None
    specificity: float | None
    error: float | None
    time: float | None
    excluded: int = 0
    throughput: float | None = None
    speedup: float | None = None

    @classmethod
    def from_counts(cls, method: str, counts: ConfusionCounts, error: float | None, time_s: float | None,
                    excluded: int = 0, throughput: float | None = None,
                    speedup: float | None = None) -> "MethodReport":
        if counts.total == 0:
            return cls(method, counts, None, None, None, error, time_s, excluded, throughput, speedup)
        m = metrics(counts)
        return cls(method, counts, m.accuracy, m.sensitivity, m.specificity, error, time_s, excluded,
                   throughput, speedup)


def evaluate_method(method: Delineator, items: Sequence[Tuple[TimeSeriesRecord, Sequence[int], ReferenceAnnotations]],
                    wave: Wave = "P", repeats: int = 1) -> MethodReport:
    """Score one delineator against references; R peaks are given, timing covers delineation only."""
    timing = benchmark(method, [(record, rpeaks) for record, rpeaks, _ in items], repeats)
    results = [method.delineate(record, rpeaks) for record, rpeaks, _ in items]
    counts = ConfusionCounts()
    truth_loc, pred_loc, truth_present, pred_present = [], [], [], []
    excluded = 0
    for result, (_, _, reference) in zip(results, items):
        aligned = align(result, reference, wave)
        counts = counts + confusion(aligned.truth_present, aligned.pred_present)
        truth_loc.append(aligned.truth_location)
        pred_loc.append(aligned.pred_location)
        truth_present.append(aligned.truth_present)
        pred_present.append(aligned.pred_present)
        excluded += aligned.excluded
    error = peak_error(np.concatenate(truth_loc), np.concatenate(pred_loc),
                       np.concatenate(truth_present), np.concatenate(pred_present)) if items else None
    return MethodReport.from_counts(method.name, counts, error, timing.seconds, excluded)


COLUMNS = ("Method", "Accuracy (%)", "Sensitivity (%)", "Specificity (%)", "Error (Samples)", "Time (s)")
TIMING_COLUMNS = ("Throughput (intervals/s)", "Speedup (x)")


@dataclass(frozen=True)
class EvalReport:
    """Per-method results for one wave.

    With ``swap_fp_fn`` the FP and FN counts are reported swapped and
    sensitivity/specificity are recomputed from the swapped counts. Reports
    whose rows carry a throughput (``keed bench``) add throughput and speedup
    columns to the table and CSV.
    """
    wave: str
    methods: Tuple[MethodReport, ...]
    swap_fp_fn: bool = False
    sweep: Tuple[Tuple[float, ConfusionCounts], ...] = field(default=())

    @property
    def timed(self) -> bool:
        return any(m.throughput is not None for m in self.methods)

    def rows(self) -> List[MethodReport]:
        if not self.swap_fp_fn:
            return list(self.methods)
        return [MethodReport.from_counts(m.method, m.counts.swapped(), m.error, m.time, m.excluded,
                                         m.throughput, m.speedup)
                for m in self.methods]

    def columns(self) -> Tuple[str, ...]:
        return COLUMNS + TIMING_COLUMNS if self.timed else COLUMNS

    def _values(self, m: MethodReport) -> List[float | None]:
        values = [_percent(m.accuracy), _percent(m.sensitivity), _percent(m.specificity), m.error, m.time]
        return values + [m.throughput, m.speedup] if self.timed else values

    def to_dict(self) -> dict:
        return {
            "wave": self.wave,
            "convention": "swapped" if self.swap_fp_fn else "standard",
            "methods": [
                {"method": m.method, **asdict(m.counts), "accuracy": _percent(m.accuracy),
                 "sensitivity": _percent(m.sensitivity), "specificity": _percent(m.specificity),
                 "error": m.error, "time": m.time, "excluded": m.excluded,
                 "throughput": m.throughput, "speedup": m.speedup}
                for m in self.rows()
            ],
            "sweep": [{"lambda": lam, **asdict(c)} for lam, c in self.sweep],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        lines = [",".join(self.columns())]
        for m in self.rows():
            lines.append(",".join([m.method] + [_cell(v) for v in self._values(m)]))
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        """Aligned plain text; the best value of each metric column is starred."""
        rows = self.rows()
        columns = self.columns()
        values = [self._values(m) for m in rows]
        # error and time are better when lower, everything else when higher
        lower_is_better = {3, 4}
        digits = [1, 1, 1, 1, 4, 1, 1]
        best = []
        for column in range(len(columns) - 1):
            present = [v[column] for v in values if v[column] is not None]
            if not present:
                best.append(None)
            else:
                best.append(min(present) if column in lower_is_better else max(present))
        if self.timed:
            best[-1] = None
        table = [list(columns)]
        for m, v in zip(rows, values):
            cells = [m.method]
            for column, value in enumerate(v):
                cell = _cell(value, digits[column])
                if value is not None and value == best[column] and len(rows) > 1:
                    cell += "*"
                cells.append(cell)
            table.append(cells)
        widths = [max(len(row[i]) for row in table) for i in range(len(columns))]
        lines = [" | ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in table]
        lines.insert(1, "-+-".join("-" * width for width in widths))
        return f"Wave {self.wave}\n" + "\n".join(lines) + "\n"


def _percent(value: float | None) -> float | None:
    return None if value is None else 100.0 * value


def _cell(value: float | None, digits: int = 4) -> str:
    return "-" if value is None else f"{value:.{digits}f}"
