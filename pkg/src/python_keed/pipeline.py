"""Detect, segment, infer in batches, decode and map back to the record."""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from typing import List, Sequence, Tuple

import numpy as np

from python_keed.core import DelineationResult, TimeSeriesRecord
from python_keed.heatmap import DecodeConfig, decode_batch
from python_keed.net.model import ModelConfig, Parameters, model_forward
from python_keed.qrs import QrsConfig, detect_rpeaks
from python_keed.segmenter import BeatInterval, split_intervals

logger = logging.getLogger(__name__)

DEFAULT_BATCH = 64


def default_workers() -> int:
    return os.cpu_count() or 1


class KeedDelineator:
    """Heatmap-network delineator.

    Intervals are stacked into batches that run on a thread pool; weights
    are shared read-only between workers.
    """

    name = "KEED"

    def __init__(self, params: Parameters, cfg: ModelConfig, decode: DecodeConfig | None = None,
                 workers: int | None = None, batch_size: int = DEFAULT_BATCH, dtype=np.float32):
        self.cfg = cfg
        self.decode = decode or DecodeConfig()
        self.workers = max(1, workers or default_workers())
        self.batch_size = max(1, batch_size)
        self.dtype = np.dtype(dtype)
        self.params = params.astype(self.dtype)

    def intervals(self, record: TimeSeriesRecord, rpeaks: Sequence[int]) -> List[BeatInterval]:
        return split_intervals(record, rpeaks, self.cfg.L)

    def heatmaps(self, intervals: Sequence[BeatInterval]) -> np.ndarray:
        """Model output of shape (N, K, L) for the given intervals."""
        if not intervals:
            return np.zeros((0, self.cfg.K, self.cfg.L))
        inputs = np.stack([interval.values for interval in intervals])
        batches = [inputs[i:i + self.batch_size] for i in range(0, len(inputs), self.batch_size)]

        def run(batch: np.ndarray) -> np.ndarray:
            return model_forward(self.params, self.cfg, batch, dtype=self.dtype)

        if self.workers == 1 or len(batches) == 1:
            outputs = [run(batch) for batch in batches]
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                outputs = list(pool.map(run, batches))
        return np.concatenate(outputs).astype(np.float64)

    def delineate(self, record: TimeSeriesRecord, rpeaks: Sequence[int]) -> DelineationResult:
        intervals = self.intervals(record, rpeaks)
        decoded = decode_batch(self.heatmaps(intervals), intervals, self.decode)
        return DelineationResult(record.record_id, record.fs, tuple(decoded))

    def delineate_with_heatmaps(self, record: TimeSeriesRecord,
                                rpeaks: Sequence[int]) -> Tuple[DelineationResult, np.ndarray]:
        intervals = self.intervals(record, rpeaks)
        maps = self.heatmaps(intervals)
        return DelineationResult(record.record_id, record.fs, tuple(decode_batch(maps, intervals, self.decode))), maps


def delineate_record(delineator: KeedDelineator, record: TimeSeriesRecord,
                     qrs: QrsConfig | None = None) -> DelineationResult:
    """Full pipeline on one record, starting from R-peak detection."""
    rpeaks = detect_rpeaks(record, qrs)
    logger.info("%s: %.1f s, %d R peaks, %d intervals", record.record_id, record.duration, len(rpeaks),
                max(0, len(rpeaks) - 1))
    if len(rpeaks) < 2:
        return DelineationResult(record.record_id, record.fs, ())
    return delineator.delineate(record, rpeaks)


def delineate_records(delineator: KeedDelineator, records: Sequence[TimeSeriesRecord],
                      qrs: QrsConfig | None = None) -> List[DelineationResult]:
    """Delineate several records concurrently, preserving input order."""
    if delineator.workers == 1 or len(records) <= 1:
        return [delineate_record(delineator, record, qrs) for record in records]
    with ThreadPoolExecutor(max_workers=min(delineator.workers, len(records))) as pool:
        return list(pool.map(lambda record: delineate_record(delineator, record, qrs), records))
