"""Desk-scale end-to-end runs on synthetic corpora.

These train a real model and take minutes; they are deselected by default
and run with ``pytest -m slow``.
"""

from dataclasses import replace

import numpy as np
import pytest

from python_keed.baseline import WaveletDelineator
from python_keed.core import KeypointKind
from python_keed.evaluation import evaluate_method
from python_keed.heatmap import DecodeConfig, decode_presence
from python_keed.net.model import ModelConfig, init_parameters, model_forward
from python_keed.net.train import TrainConfig, train
from python_keed.pipeline import KeedDelineator
from python_keed.synth import BeatTemplate, SynthConfig, gen_record, generate_corpus, stack_pairs, to_training_set

pytestmark = pytest.mark.slow

MODEL = ModelConfig(width=24, depth=4, n_blocks=2)
DECODE = DecodeConfig(lam=0.4)


@pytest.fixture(scope="module")
def trained():
    corpus = generate_corpus(SynthConfig(n_records=20, n_beats=101, episode_fraction=0.25, noise_snr_db=20.0,
                                         seed=100))
    inputs, targets = stack_pairs(to_training_set(corpus, MODEL.L, DECODE))
    assert len(inputs) == 2000
    params, _ = train(init_parameters(MODEL, seed=0), MODEL, inputs, targets,
                      TrainConfig(epochs=10, batch_size=32, lr=2e-3, seed=0))
    return params


def _held_out(noise_snr_db):
    return generate_corpus(SynthConfig(n_records=5, n_beats=101, episode_fraction=0.25, noise_snr_db=noise_snr_db,
                                       seed=200))


def test_model_recovers_p_presence_and_location(trained):
    inputs, targets = stack_pairs(to_training_set(_held_out(20.0), MODEL.L, DECODE))
    assert len(inputs) == 500
    heatmaps = np.concatenate([model_forward(trained, MODEL, inputs[i:i + 100]) for i in range(0, 500, 100)])
    channel = int(KeypointKind.PPeak)
    truth = targets[:, channel].max(axis=1) == 1.0
    pred = decode_presence(heatmaps, DECODE)[:, channel]
    assert np.mean(truth == pred) >= 0.95
    both = truth & pred
    error = np.abs(heatmaps[both, channel].argmax(axis=1) - targets[both, channel].argmax(axis=1))
    assert error.mean() <= 5


def test_dwt_baseline_on_clean_records():
    items = [(s.record, s.rpeaks, s.reference()) for s in _held_out(None)]
    report = evaluate_method(WaveletDelineator("DWT"), items, "P")
    assert report.accuracy >= 0.90


def test_model_matches_or_beats_dwt_on_noisy_records(trained):
    items = [(s.record, s.rpeaks, s.reference()) for s in _held_out(10.0)]
    keed = evaluate_method(KeedDelineator(trained, MODEL, DECODE, workers=1), items, "P")
    dwt = evaluate_method(WaveletDelineator("DWT"), items, "P")
    assert keed.accuracy >= dwt.accuracy


def _shifted_template(p_center: float, t_center: float) -> BeatTemplate:
    waves = dict(BeatTemplate().waves)
    waves["P"] = replace(waves["P"], center=p_center)
    waves["T"] = replace(waves["T"], center=t_center)
    return BeatTemplate(waves=waves)


def test_keypoints_follow_a_shifted_wave_complex(trained):
    """Moving P and T inside the interval moves every channel's argmax with them."""
    early = to_training_set([gen_record(12, template=_shifted_template(-0.21, 0.355))], MODEL.L, DECODE)
    late = to_training_set([gen_record(12, template=_shifted_template(-0.19, 0.395))], MODEL.L, DECODE)
    early_inputs, early_targets = stack_pairs(early)
    late_inputs, late_targets = stack_pairs(late)
    early_maps = model_forward(trained, MODEL, early_inputs)
    late_maps = model_forward(trained, MODEL, late_inputs)
    for kind in KeypointKind:
        shift = late_targets[:, kind].argmax(axis=1) - early_targets[:, kind].argmax(axis=1)
        assert np.all(shift != 0)
        moved = late_maps[:, kind].argmax(axis=1) - early_maps[:, kind].argmax(axis=1)
        assert np.all(np.abs(moved - shift) <= 2), kind.name
