"""Tests for the shared domain types in python_keed.core."""

import numpy as np
import pytest

from python_keed.core import (
    K,
    DelineationResult,
    FiducialAnnotation,
    IntervalDelineation,
    KeypointEstimate,
    KeypointKind,
    ReferenceAnnotations,
    TimeSeriesRecord,
    peak_kind,
)
from python_keed.errors import DataError, KeedError


class TestKeypointKind:
    """Ordinal encoding of the six keypoint channels."""

    def test_cardinality(self):
        assert K == 6
        assert [int(k) for k in KeypointKind] == [0, 1, 2, 3, 4, 5]

    def test_names(self):
        assert [k.name for k in KeypointKind] == ["POn", "PPeak", "POff", "TOn", "TPeak", "TOff"]

    def test_round_trip_through_ordinal_and_name(self):
        for kind in KeypointKind:
            assert KeypointKind(int(kind)) is kind
            assert KeypointKind[kind.name] is kind

    def test_wave(self):
        assert KeypointKind.POff.wave == "P"
        assert KeypointKind.TOn.wave == "T"

    def test_peak_kind(self):
        assert peak_kind("P") is KeypointKind.PPeak
        assert peak_kind("T") is KeypointKind.TPeak

    def test_peak_kind_rejects_unknown_wave(self):
        with pytest.raises(DataError):
            peak_kind("Q")


class TestTimeSeriesRecord:
    def test_basic(self):
        record = TimeSeriesRecord([0.0, 1.0, 0.0], 250)
        assert len(record) == 3
        assert record.fs == 250.0
        assert record.duration == pytest.approx(3 / 250)

    def test_samples_are_read_only(self):
        record = TimeSeriesRecord([0.0, 1.0], 250)
        with pytest.raises(ValueError):
            record.samples[0] = 5.0

    def test_rejects_non_positive_fs(self):
        with pytest.raises(DataError):
            TimeSeriesRecord([1.0], 0)

    def test_rejects_empty(self):
        with pytest.raises(DataError):
            TimeSeriesRecord([], 250)

    def test_rejects_non_finite(self):
        with pytest.raises(DataError):
            TimeSeriesRecord([0.0, np.nan], 250)

    def test_equality_compares_samples(self):
        a = TimeSeriesRecord([0.0, 1.0], 250, record_id="a")
        assert a == TimeSeriesRecord(np.array([0.0, 1.0]), 250, record_id="a")
        assert a != TimeSeriesRecord([0.0, 2.0], 250, record_id="a")

    def test_errors_are_value_errors(self):
        """DataError derives from both KeedError and ValueError."""
        with pytest.raises(KeedError):
            TimeSeriesRecord([], 250)
        with pytest.raises(ValueError):
            TimeSeriesRecord([], 250)


class TestFiducialAnnotation:
    def test_absent_index_is_unchecked(self):
        annotation = FiducialAnnotation(KeypointKind.PPeak, -1, present=False)
        assert not annotation.present

    def test_present_negative_index_rejected(self):
        with pytest.raises(DataError):
            FiducialAnnotation(KeypointKind.PPeak, -1)

    def test_kind_coerced_from_int(self):
        assert FiducialAnnotation(4, 10).kind is KeypointKind.TPeak


class TestIntervalDelineation:
    def test_location_must_lie_within_bounds(self):
        with pytest.raises(DataError):
            IntervalDelineation(100, 200, {KeypointKind.PPeak: KeypointEstimate(True, 250, 0.9)})

    def test_absent_location_is_unchecked(self):
        interval = IntervalDelineation(100, 200, {KeypointKind.PPeak: KeypointEstimate(False, 250, 0.1)})
        assert not interval.present(KeypointKind.PPeak)

    def test_confidence_range(self):
        with pytest.raises(DataError):
            KeypointEstimate(True, 10, 1.5)

    def test_end_after_start(self):
        with pytest.raises(DataError):
            IntervalDelineation(100, 100)


class TestDelineationResult:
    def _result(self):
        first = IntervalDelineation(0, 100, {
            KeypointKind.PPeak: KeypointEstimate(True, 80, 0.9),
            KeypointKind.TPeak: KeypointEstimate(False, 30, 0.2),
        })
        second = IntervalDelineation(100, 210, {
            KeypointKind.PPeak: KeypointEstimate(False, 190, 0.1),
            KeypointKind.TPeak: KeypointEstimate(True, 140, 0.8),
        })
        return DelineationResult("r", 250.0, [first, second])

    def test_presence(self):
        result = self._result()
        assert result.presence(KeypointKind.PPeak).tolist() == [True, False]
        assert result.presence(KeypointKind.TPeak).tolist() == [False, True]

    def test_present_count(self):
        result = self._result()
        assert result.present_count() == 2
        assert result.present_count([KeypointKind.PPeak]) == 1

    def test_intervals_become_tuple(self):
        assert isinstance(self._result().intervals, tuple)


class TestReferenceAnnotations:
    def test_peaks_of(self):
        reference = ReferenceAnnotations([10, 200], (
            FiducialAnnotation(KeypointKind.PPeak, 150),
            FiducialAnnotation(KeypointKind.PPeak, 90),
            FiducialAnnotation(KeypointKind.TPeak, 60),
            FiducialAnnotation(KeypointKind.PPeak, 0, present=False),
        ))
        assert reference.peaks_of(KeypointKind.PPeak).tolist() == [90, 150]
        assert reference.peaks_of(KeypointKind.TPeak).tolist() == [60]

    def test_rpeaks_strictly_increasing(self):
        with pytest.raises(DataError):
            ReferenceAnnotations([10, 10])
