"""Soft-gated hourglass U-Net: parameters, forward pass and exact gradients."""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Tuple

import numpy as np

from python_keed.config import ConfigSection, section
from python_keed.core import K
from python_keed.errors import ConfigError, DivergenceError, ShapeError
from python_keed.net import layers
from python_keed.segmenter import DEFAULT_LENGTH

logger = logging.getLogger(__name__)

BCE_CLAMP = 1e-7


@section("model", "net")
@dataclass(frozen=True)
class ModelConfig(ConfigSection):
    """Architecture hyperparameters.

    Attributes:
        width: Channels of every hidden layer
        depth: Encoder (and decoder) levels per block
        n_blocks: Stacked hourglass blocks
        L: Input length; must be divisible by 2**depth
        K: Output heatmap channels
        kernel_size: Odd convolution kernel length
    """
    width: int = field(default=48, metadata={"name": ["width"], "type": "int"})
    depth: int = field(default=4, metadata={"name": ["depth"], "type": "int"})
    n_blocks: int = field(default=2, metadata={"name": ["n_blocks", "blocks"], "type": "int"})
    L: int = field(default=DEFAULT_LENGTH, metadata={"name": ["L", "length"], "type": "int"})
    K: int = field(default=K, metadata={"name": ["K", "channels"], "type": "int"})
    kernel_size: int = field(default=3, metadata={"name": ["kernel_size", "kernel"], "type": "int"})

    def __post_init__(self):
        for name in ("width", "depth", "n_blocks", "K", "kernel_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.L < 2 or self.L % (2 ** self.depth):
            raise ConfigError(f"L={self.L} must be divisible by 2**depth={2 ** self.depth}")

    def to_dict(self) -> Dict[str, int]:
        return {"width": self.width, "depth": self.depth, "n_blocks": self.n_blocks,
                "L": self.L, "K": self.K, "kernel_size": self.kernel_size}


class Parameters:
    """Ordered, named parameter tensors.

    Iteration order is the order of insertion, which ``init_parameters``
    fixes for every config.
    """

    def __init__(self, tensors: Dict[str, np.ndarray]):
        self._tensors = dict(tensors)

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __contains__(self, name: str) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> List[str]:
        return list(self._tensors)

    def items(self):
        return self._tensors.items()

    @property
    def size(self) -> int:
        return sum(t.size for t in self._tensors.values())

    def copy(self) -> "Parameters":
        return Parameters({name: t.copy() for name, t in self._tensors.items()})

    def astype(self, dtype) -> "Parameters":
        return Parameters({name: t.astype(dtype) for name, t in self._tensors.items()})

    def zeros_like(self) -> "Parameters":
        return Parameters({name: np.zeros_like(t) for name, t in self._tensors.items()})

    def replace(self, **updates: np.ndarray) -> "Parameters":
        tensors = dict(self._tensors)
        for name, value in updates.items():
            if name not in tensors or tensors[name].shape != np.shape(value):
                raise ShapeError(f"Cannot replace {name!r} with shape {np.shape(value)}")
            tensors[name] = np.asarray(value, dtype=tensors[name].dtype)
        return Parameters(tensors)

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(t)) for t in self._tensors.values())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Parameters):
            return NotImplemented
        return self.names() == other.names() and all(
            self[name].shape == other[name].shape and np.array_equal(self[name], other[name]) for name in self)


def parameter_shapes(cfg: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Names and shapes of every learnable tensor, in canonical order."""
    w, k = cfg.width, cfg.kernel_size
    shapes: Dict[str, Tuple[int, ...]] = {"stem.weight": (w, 1, k), "stem.bias": (w,)}

    def residual(prefix: str):
        for unit in ("1", "2"):
            shapes[f"{prefix}.norm{unit}.scale"] = (w,)
            shapes[f"{prefix}.norm{unit}.shift"] = (w,)
            shapes[f"{prefix}.conv{unit}.weight"] = (w, w, k)
            shapes[f"{prefix}.conv{unit}.bias"] = (w,)
        shapes[f"{prefix}.alpha"] = (1,)

    for b in range(cfg.n_blocks):
        for level in range(cfg.depth):
            residual(f"block{b}.enc{level}")
        for level in reversed(range(cfg.depth)):
            shapes[f"block{b}.up{level}.weight"] = (w, w, k)
            shapes[f"block{b}.up{level}.bias"] = (w,)
            shapes[f"block{b}.skip{level}.gate"] = (1,)
            residual(f"block{b}.dec{level}")
    shapes["head.weight"] = (cfg.K, w, 1)
    shapes["head.bias"] = (cfg.K,)
    return shapes


def init_parameters(cfg: ModelConfig, seed: int = 0) -> Parameters:
    """Fan-in scaled uniform kernels, zero biases, unit gates and norm scales."""
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in parameter_shapes(cfg).items():
        if name.endswith(".weight"):
            bound = 1.0 / np.sqrt(shape[1] * shape[2])
            tensors[name] = rng.uniform(-bound, bound, size=shape)
        elif name.endswith((".alpha", ".gate", ".scale")):
            tensors[name] = np.ones(shape)
        else:
            tensors[name] = np.zeros(shape)
    return Parameters(tensors)


def _conv(params: Parameters, prefix: str, x: np.ndarray):
    return layers.conv1d_forward(x, params[f"{prefix}.weight"], params[f"{prefix}.bias"])


def _conv_back(grads: Dict[str, np.ndarray], prefix: str, dout: np.ndarray, memory) -> np.ndarray:
    dx, dweight, dbias = layers.conv1d_backward(dout, memory)
    grads[f"{prefix}.weight"] = dweight
    grads[f"{prefix}.bias"] = dbias
    return dx


def residual_forward(params: Parameters, prefix: str, x: np.ndarray):
    """out = alpha * x + conv2(relu(norm2(conv1(relu(norm1(x))))))"""
    memory = {}
    h, memory["norm1"] = layers.norm_forward(x, params[f"{prefix}.norm1.scale"], params[f"{prefix}.norm1.shift"])
    h, memory["relu1"] = layers.relu_forward(h)
    h, memory["conv1"] = _conv(params, f"{prefix}.conv1", h)
    h, memory["norm2"] = layers.norm_forward(h, params[f"{prefix}.norm2.scale"], params[f"{prefix}.norm2.shift"])
    h, memory["relu2"] = layers.relu_forward(h)
    h, memory["conv2"] = _conv(params, f"{prefix}.conv2", h)
    memory["x"] = x
    return params[f"{prefix}.alpha"][0] * x + h, memory


def residual_backward(params: Parameters, prefix: str, dout: np.ndarray, memory, grads) -> np.ndarray:
    grads[f"{prefix}.alpha"] = np.array([np.sum(dout * memory["x"])])
    dh = _conv_back(grads, f"{prefix}.conv2", dout, memory["conv2"])
    dh = layers.relu_backward(dh, memory["relu2"])
    dh, grads[f"{prefix}.norm2.scale"], grads[f"{prefix}.norm2.shift"] = layers.norm_backward(dh, memory["norm2"])
    dh = _conv_back(grads, f"{prefix}.conv1", dh, memory["conv1"])
    dh = layers.relu_backward(dh, memory["relu1"])
    dh, grads[f"{prefix}.norm1.scale"], grads[f"{prefix}.norm1.shift"] = layers.norm_backward(dh, memory["norm1"])
    return params[f"{prefix}.alpha"][0] * dout + dh


def hourglass_forward(params: Parameters, cfg: ModelConfig, block: int, x: np.ndarray):
    """Encoder levels [residual, pool]; decoder levels [upsample, conv, gated skip, residual]."""
    prefix = f"block{block}"
    memory: Dict[str, object] = {}
    skips = []
    h = x
    for level in range(cfg.depth):
        h, memory[f"enc{level}"] = residual_forward(params, f"{prefix}.enc{level}", h)
        skips.append(h)
        h, memory[f"pool{level}"] = layers.maxpool_forward(h)
    for level in reversed(range(cfg.depth)):
        u, memory[f"up{level}"] = _conv(params, f"{prefix}.up{level}", layers.upsample_forward(h))
        h = params[f"{prefix}.skip{level}.gate"][0] * skips[level] + u
        h, memory[f"dec{level}"] = residual_forward(params, f"{prefix}.dec{level}", h)
    memory["skips"] = skips
    return h, memory


def hourglass_backward(params: Parameters, cfg: ModelConfig, block: int, dout: np.ndarray, memory, grads) -> np.ndarray:
    prefix = f"block{block}"
    skips = memory["skips"]
    dskips = [None] * cfg.depth
    dh = dout
    # decoder ran coarse to fine, so unwind fine to coarse
    for level in range(cfg.depth):
        dh = residual_backward(params, f"{prefix}.dec{level}", dh, memory[f"dec{level}"], grads)
        grads[f"{prefix}.skip{level}.gate"] = np.array([np.sum(dh * skips[level])])
        dskips[level] = params[f"{prefix}.skip{level}.gate"][0] * dh
        du = _conv_back(grads, f"{prefix}.up{level}", dh, memory[f"up{level}"])
        dh = layers.upsample_backward(du)
    for level in reversed(range(cfg.depth)):
        dh = layers.maxpool_backward(dh, memory[f"pool{level}"]) + dskips[level]
        dh = residual_backward(params, f"{prefix}.enc{level}", dh, memory[f"enc{level}"], grads)
    return dh


@dataclass
class ForwardMemory:
    """Everything ``backward`` needs from a forward pass."""
    stem: tuple
    blocks: List[dict]
    head: tuple
    logits: np.ndarray
    probabilities: np.ndarray


def _check_input(cfg: ModelConfig, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch)
    if batch.ndim == 1:
        batch = batch[None, :]
    if batch.ndim != 2 or batch.shape[1] != cfg.L:
        raise ShapeError(f"Model expects a (B, {cfg.L}) batch, got {batch.shape}")
    if not np.all(np.isfinite(batch)):
        raise ShapeError("Model input contains non-finite values")
    return batch


def forward_with_cache(params: Parameters, cfg: ModelConfig, batch: np.ndarray, dtype=np.float64) -> ForwardMemory:
    batch = _check_input(cfg, batch).astype(dtype)[:, None, :]
    if np.dtype(dtype) != np.float64:
        params = params.astype(dtype)
    h, stem = _conv(params, "stem", batch)
    blocks = []
    for block in range(cfg.n_blocks):
        h, memory = hourglass_forward(params, cfg, block, h)
        blocks.append(memory)
    logits, head = _conv(params, "head", h)
    if not np.all(np.isfinite(logits)):
        raise DivergenceError("Model produced non-finite activations")
    return ForwardMemory(stem, blocks, head, logits, layers.sigmoid(logits))


def model_forward(params: Parameters, cfg: ModelConfig, batch: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Evaluate the network.

    Args:
        params: Weights matching ``cfg``
        cfg: Architecture
        batch: Inputs of shape (B, L)
        dtype: Computation precision; float32 is fine for inference

    Returns:
        Heatmaps of shape (B, K, L) with entries in (0, 1).
    """
    return forward_with_cache(params, cfg, batch, dtype).probabilities


def bce_loss(pred: np.ndarray, target: np.ndarray) -> float:
    """Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7]."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError(f"Prediction shape {pred.shape} does not match target {target.shape}")
    p = np.clip(pred, BCE_CLAMP, 1 - BCE_CLAMP)
    return float(np.mean(-(target * np.log(p) + (1 - target) * np.log(1 - p))))


def backward(params: Parameters, cfg: ModelConfig, batch: np.ndarray, target: np.ndarray) -> Tuple[float, Parameters]:
    """Loss and exact gradients of ``bce_loss(model_forward(...), target)``."""
    memory = forward_with_cache(params, cfg, batch)
    target = np.asarray(target, dtype=np.float64)
    loss = bce_loss(memory.probabilities, target)
    p = memory.probabilities
    inside = (p > BCE_CLAMP) & (p < 1 - BCE_CLAMP)
    dlogits = np.where(inside, (p - target) / p.size, 0.0)

    grads: Dict[str, np.ndarray] = {}
    dh = _conv_back(grads, "head", dlogits, memory.head)
    for block in reversed(range(cfg.n_blocks)):
        dh = hourglass_backward(params, cfg, block, dh, memory.blocks[block], grads)
    _conv_back(grads, "stem", dh, memory.stem)
    return loss, Parameters({name: grads[name] for name in params})
