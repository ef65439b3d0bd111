"""Tests for the soft-gated hourglass network and its gradients."""

import math

import numpy as np
import pytest

from python_keed.errors import DivergenceError, ShapeError
from python_keed.net.model import (
    ModelConfig,
    Parameters,
    backward,
    bce_loss,
    hourglass_forward,
    init_parameters,
    model_forward,
    parameter_shapes,
    residual_backward,
    residual_forward,
)

TINY = ModelConfig(width=4, depth=2, n_blocks=1, L=32, K=2)


def _zeros(cfg: ModelConfig) -> Parameters:
    return Parameters({name: np.zeros(shape) for name, shape in parameter_shapes(cfg).items()})


def _problem(seed: int = 0, batch: int = 2):
    rng = np.random.default_rng(seed)
    params = init_parameters(TINY, seed=seed)
    inputs = rng.normal(size=(batch, TINY.L))
    targets = rng.uniform(0.0, 1.0, size=(batch, TINY.K, TINY.L))
    return params, inputs, targets


class TestForward:
    def test_zero_parameters_give_one_half(self):
        batch = np.random.default_rng(0).normal(size=(3, TINY.L))
        assert np.all(model_forward(_zeros(TINY), TINY, batch) == 0.5)

    def test_default_output_shape(self):
        cfg = ModelConfig()
        batch = np.random.default_rng(1).normal(size=(3, cfg.L))
        heatmaps = model_forward(init_parameters(cfg), cfg, batch)
        assert heatmaps.shape == (3, 6, 256)
        assert np.all((heatmaps > 0) & (heatmaps < 1))

    def test_single_vector_is_a_batch_of_one(self):
        params, inputs, _ = _problem()
        assert model_forward(params, TINY, inputs[0]).shape == (1, TINY.K, TINY.L)

    def test_batch_items_are_independent(self):
        params, inputs, _ = _problem(batch=3)
        together = model_forward(params, TINY, inputs)
        alone = model_forward(params, TINY, inputs[1:2])
        assert np.allclose(together[1], alone[0], atol=1e-10)

    def test_float32_inference_close_to_float64(self):
        params, inputs, _ = _problem()
        full = model_forward(params, TINY, inputs)
        single = model_forward(params, TINY, inputs, dtype=np.float32)
        assert single.dtype == np.float32
        assert np.allclose(full, single, atol=1e-4)

    def test_wrong_length(self):
        params, _, _ = _problem()
        with pytest.raises(ShapeError):
            model_forward(params, TINY, np.zeros((2, 30)))

    def test_non_finite_input(self):
        params, inputs, _ = _problem()
        inputs[0, 3] = np.nan
        with pytest.raises(ShapeError):
            model_forward(params, TINY, inputs)

    def test_divergence(self):
        params, inputs, _ = _problem()
        broken = params.replace(**{"head.bias": np.full(TINY.K, np.nan)})
        with pytest.raises(DivergenceError):
            model_forward(broken, TINY, inputs)


class TestInitialization:
    def test_seeded(self):
        assert init_parameters(TINY, seed=5) == init_parameters(TINY, seed=5)
        assert init_parameters(TINY, seed=5) != init_parameters(TINY, seed=6)

    def test_gates_and_biases(self):
        params = init_parameters(TINY, seed=1)
        for name, tensor in params.items():
            if name.endswith((".alpha", ".gate", ".scale")):
                assert np.all(tensor == 1.0), name
            elif name.endswith((".bias", ".shift")):
                assert np.all(tensor == 0.0), name

    def test_fan_in_bound(self):
        params = init_parameters(TINY, seed=2)
        bound = 1.0 / math.sqrt(TINY.width * TINY.kernel_size)
        assert np.max(np.abs(params["block0.enc0.conv1.weight"])) <= bound

    def test_names_follow_shapes(self):
        params = init_parameters(TINY)
        assert params.names() == list(parameter_shapes(TINY))
        assert params["stem.weight"].shape == (4, 1, 3)
        assert params["head.weight"].shape == (2, 4, 1)
        assert "block0.skip1.gate" in params

    def test_size_counts_every_element(self):
        params = init_parameters(TINY)
        assert params.size == sum(int(np.prod(shape)) for shape in parameter_shapes(TINY).values())
        assert params.size == sum(tensor.size for _, tensor in params.items())


class TestResidualBlock:
    def test_zero_branch_is_gated_identity(self):
        params = init_parameters(TINY, seed=3)
        prefix = "block0.enc0"
        params = params.replace(**{
            f"{prefix}.conv2.weight": np.zeros((4, 4, 3)),
            f"{prefix}.alpha": np.array([0.25]),
        })
        x = np.random.default_rng(3).normal(size=(2, 4, 32))
        out, _ = residual_forward(params, prefix, x)
        assert np.allclose(out, 0.25 * x)

    def test_unused_branch_gets_zero_gradient(self):
        params = init_parameters(TINY, seed=3)
        prefix = "block0.enc0"
        params = params.replace(**{f"{prefix}.conv2.weight": np.zeros((4, 4, 3))})
        x = np.random.default_rng(4).normal(size=(2, 4, 32))
        _, memory = residual_forward(params, prefix, x)
        grads = {}
        dx = residual_backward(params, prefix, np.ones_like(x), memory, grads)
        assert np.allclose(dx, np.ones_like(x))
        for name in ("conv1.weight", "conv1.bias", "norm1.scale", "norm1.shift", "norm2.scale", "norm2.shift"):
            assert not np.any(grads[f"{prefix}.{name}"]), name
        assert grads[f"{prefix}.alpha"][0] == pytest.approx(np.sum(x))


class TestSkipGate:
    """The encoder output of level 0 is made the block input, then changed only where pooling ignores it."""

    def _outputs(self, gate: float):
        params = init_parameters(TINY, seed=5).replace(**{
            "block0.enc0.conv2.weight": np.zeros((4, 4, 3)),
            "block0.skip0.gate": np.array([gate]),
        })
        x = np.random.default_rng(6).normal(size=(2, 4, 32))
        pairs = x.reshape(2, 4, 16, 2)
        losers = pairs.argmin(axis=3)[..., None]
        perturbed = pairs.copy()
        np.put_along_axis(perturbed, losers, np.take_along_axis(pairs, losers, axis=3) - 1.0, axis=3)
        perturbed = perturbed.reshape(x.shape)

        out, memory = hourglass_forward(params, TINY, 0, x)
        other, other_memory = hourglass_forward(params, TINY, 0, perturbed)
        assert np.array_equal(memory["skips"][0], x)
        assert not np.array_equal(other_memory["skips"][0], memory["skips"][0])
        assert np.array_equal(other_memory["skips"][1], memory["skips"][1])
        return out, other

    def test_closed_gate_ignores_skip_contents(self):
        out, other = self._outputs(0.0)
        assert np.array_equal(out, other)

    def test_open_gate_passes_skip_contents(self):
        out, other = self._outputs(1.0)
        assert not np.allclose(out, other)


class TestBceLoss:
    def test_closed_form(self):
        assert bce_loss(np.array([0.5]), np.array([1.0])) == pytest.approx(math.log(2))
        assert bce_loss(np.array([0.25, 0.75]), np.array([0.0, 1.0])) == pytest.approx(-math.log(0.75))

    def test_clamped(self):
        assert bce_loss(np.array([0.0]), np.array([1.0])) == pytest.approx(-math.log(1e-7))
        assert math.isfinite(bce_loss(np.array([1.0]), np.array([0.0])))

    def test_matches_elementwise_oracle(self):
        rng = np.random.default_rng(8)
        pred = rng.uniform(0.01, 0.99, size=(3, 6, 16))
        target = rng.uniform(size=(3, 6, 16))
        expected = np.mean(-(target * np.log(pred) + (1 - target) * np.log(1 - pred)))
        assert bce_loss(pred, target) == pytest.approx(expected, rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            bce_loss(np.zeros((2, 3)), np.zeros((3, 2)))


class TestGradients:
    """Analytic gradients against central finite differences.

    Points where the two difference steps disagree straddle a ReLU or
    max-pool switch and are skipped.
    """

    def _loss(self, params, inputs, targets):
        return bce_loss(model_forward(params, TINY, inputs), targets)

    def _finite_difference(self, params, name, index, inputs, targets, h):
        tensor = params[name].copy()
        saved = tensor[index]
        tensor[index] = saved + h
        plus = self._loss(params.replace(**{name: tensor}), inputs, targets)
        tensor[index] = saved - h
        minus = self._loss(params.replace(**{name: tensor}), inputs, targets)
        return (plus - minus) / (2 * h)

    def test_loss_matches_forward(self):
        params, inputs, targets = _problem()
        loss, _ = backward(params, TINY, inputs, targets)
        assert loss == pytest.approx(self._loss(params, inputs, targets), rel=1e-12)

    def test_gradient_shapes(self):
        params, inputs, targets = _problem()
        _, grads = backward(params, TINY, inputs, targets)
        assert grads.names() == params.names()
        for name in params:
            assert grads[name].shape == params[name].shape

    def test_gradcheck(self):
        params, inputs, targets = _problem(seed=11)
        _, grads = backward(params, TINY, inputs, targets)
        rng = np.random.default_rng(12)
        names = params.names()
        checked = 0
        worst = 0.0
        for _ in range(260):
            name = names[int(rng.integers(len(names)))]
            index = tuple(int(rng.integers(n)) for n in params[name].shape)
            coarse = self._finite_difference(params, name, index, inputs, targets, 1e-4)
            fine = self._finite_difference(params, name, index, inputs, targets, 1e-6)
            if abs(coarse - fine) / max(abs(coarse), abs(fine), 1e-4) > 1e-4:
                continue
            analytic = float(grads[name][index])
            worst = max(worst, abs(analytic - fine) / max(abs(analytic), abs(fine), 1e-4))
            checked += 1
        assert checked >= 200
        assert worst < 1e-4

    def test_every_parameter_kind_receives_gradient(self):
        params, inputs, targets = _problem(seed=2)
        _, grads = backward(params, TINY, inputs, targets)
        for suffix in (".alpha", ".gate", ".scale", ".shift", ".weight", ".bias"):
            assert any(np.any(grads[n]) for n in grads if n.endswith(suffix)), suffix
