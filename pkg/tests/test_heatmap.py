"""Tests for target heatmaps and keypoint decoding."""

import math

import numpy as np
import pytest

from python_keed.core import K, KeypointKind
from python_keed.errors import DataError, ShapeError
from python_keed.heatmap import DecodeConfig, decode_batch, decode_keypoints, decode_presence, make_target
from python_keed.segmenter import BeatInterval

L = 256


def _interval(r_start: int = 0, r_end: int = L - 1, length: int = L) -> BeatInterval:
    return BeatInterval(r_start, r_end, np.linspace(-1, 1, length))


class TestMakeTarget:
    def test_closed_form(self):
        target = make_target({KeypointKind.PPeak: (True, 100)}, DecodeConfig(sigma=3.0), L)
        assert target.shape == (K, L)
        assert target[KeypointKind.PPeak, 100] == 1.0
        assert target[KeypointKind.PPeak, 97] == pytest.approx(math.exp(-0.5))
        assert target[KeypointKind.PPeak, 103] == pytest.approx(math.exp(-0.5))
        expected = np.exp(-((np.arange(L) - 100) ** 2) / 18.0)
        assert np.allclose(target[KeypointKind.PPeak], expected)

    def test_absent_channel_is_zero(self):
        target = make_target({KeypointKind.TPeak: (False, 40), KeypointKind.TOn: (True, 30)}, DecodeConfig(), L)
        assert not target[KeypointKind.TPeak].any()
        assert target[KeypointKind.TOn].max() == 1.0

    def test_unlisted_kinds_are_absent(self):
        assert not make_target({}, DecodeConfig(), L).any()

    def test_index_out_of_range(self):
        with pytest.raises(DataError):
            make_target({KeypointKind.PPeak: (True, L)}, DecodeConfig(), L)

    def test_channel_out_of_range(self):
        with pytest.raises(ShapeError):
            make_target({KeypointKind.TOff: (True, 4)}, DecodeConfig(), L, n_kinds=2)


class TestDecodeKeypoints:
    def test_inverts_make_target_fuzzed(self):
        rng = np.random.default_rng(7)
        cfg = DecodeConfig()
        interval = _interval()
        for _ in range(1000):
            present = rng.random(K) < 0.5
            indices = rng.integers(0, L, K)
            fiducials = {KeypointKind(k): (bool(present[k]), int(indices[k])) for k in range(K)}
            decoded = decode_keypoints(make_target(fiducials, cfg, L), interval, cfg)
            for k in range(K):
                estimate = decoded[KeypointKind(k)]
                assert estimate.present == bool(present[k])
                if present[k]:
                    assert estimate.location == int(indices[k])
                    assert estimate.confidence == 1.0

    def test_threshold_examples(self):
        heatmaps = np.zeros((K, L))
        heatmaps[KeypointKind.PPeak, 50] = 0.5
        interval = _interval()
        assert not decode_keypoints(heatmaps, interval, DecodeConfig(lam=0.7))[KeypointKind.PPeak].present
        assert decode_keypoints(heatmaps, interval, DecodeConfig(lam=0.3))[KeypointKind.PPeak].present

    def test_threshold_is_inclusive(self):
        heatmaps = np.zeros((K, L))
        heatmaps[KeypointKind.TPeak, 10] = 0.4
        assert decode_keypoints(heatmaps, _interval(), DecodeConfig(lam=0.4))[KeypointKind.TPeak].present

    def test_tie_takes_first_maximum(self):
        heatmaps = np.zeros((K, L))
        heatmaps[KeypointKind.TOn, [30, 90]] = 0.8
        assert decode_keypoints(heatmaps, _interval(), DecodeConfig())[KeypointKind.TOn].location == 30

    def test_maps_to_original_coordinates(self):
        heatmaps = np.zeros((K, L))
        heatmaps[KeypointKind.PPeak, L - 1] = 0.9
        heatmaps[KeypointKind.TPeak, 0] = 0.9
        decoded = decode_keypoints(heatmaps, _interval(1000, 1200), DecodeConfig())
        assert decoded[KeypointKind.PPeak].location == 1200
        assert decoded[KeypointKind.TPeak].location == 1000

    def test_per_kind_override(self):
        heatmaps = np.full((K, L), 0.5)
        decoded = decode_keypoints(heatmaps, _interval(), DecodeConfig(lam=0.4, lambda_overrides={"PPeak": 0.6}))
        assert not decoded[KeypointKind.PPeak].present
        assert decoded[KeypointKind.TPeak].present

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            decode_keypoints(np.zeros((K, 128)), _interval(), DecodeConfig())

    def test_entries_outside_unit_range(self):
        heatmaps = np.zeros((K, L))
        heatmaps[0, 0] = 1.5
        with pytest.raises(DataError):
            decode_keypoints(heatmaps, _interval(), DecodeConfig())


class TestDecodePresence:
    def test_lower_lambda_never_drops_a_detection(self):
        heatmaps = np.random.default_rng(3).random((20, K, L)) ** 8
        for low, high in [(0.1, 0.5), (0.3, 0.9), (0.0, 1.0)]:
            assert np.all(decode_presence(heatmaps, DecodeConfig(lam=high)) <= decode_presence(heatmaps, DecodeConfig(lam=low)))


class TestDecodeBatch:
    def test_one_delineation_per_interval(self):
        intervals = [_interval(0, 200), _interval(200, 390)]
        heatmaps = np.zeros((2, K, L))
        heatmaps[1, KeypointKind.PPeak, 128] = 0.9
        result = decode_batch(heatmaps, intervals, DecodeConfig())
        assert [(d.r_start, d.r_end) for d in result] == [(0, 200), (200, 390)]
        assert result[1].present(KeypointKind.PPeak)
        assert not result[0].present(KeypointKind.PPeak)

    def test_count_mismatch(self):
        with pytest.raises(ShapeError):
            decode_batch(np.zeros((1, K, L)), [_interval(), _interval()], DecodeConfig())
