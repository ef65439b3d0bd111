"""Adam optimization and the seeded mini-batch training loop."""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from python_keed.config import ConfigSection, section
from python_keed.errors import ConfigError, DataError, ShapeError
from python_keed.net.model import ModelConfig, Parameters, backward, bce_loss, model_forward

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerState:
    """Adam moments and hyperparameters; ``step`` counts applied updates."""
    m: Parameters
    v: Parameters
    step: int = 0
    lr: float = 1e-3
    weight_decay: float = 1e-6
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_optimizer(params: Parameters, lr: float = 1e-3, weight_decay: float = 1e-6) -> OptimizerState:
    return OptimizerState(m=params.zeros_like(), v=params.zeros_like(), lr=lr, weight_decay=weight_decay)


def adam_step(params: Parameters, grads: Parameters, state: OptimizerState) -> Tuple[Parameters, OptimizerState]:
    """One bias-corrected Adam update with L2 decay folded into the gradient."""
    if params.names() != grads.names() or params.names() != state.m.names():
        raise ShapeError("Parameters, gradients and optimizer moments name different tensors")
    step = state.step + 1
    updated, m_new, v_new = {}, {}, {}
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ShapeError(f"Gradient for {name!r} has shape {g.shape}, expected {theta.shape}")
        g = g + state.weight_decay * theta
        m = state.beta1 * state.m[name] + (1 - state.beta1) * g
        v = state.beta2 * state.v[name] + (1 - state.beta2) * g * g
        m_hat = m / (1 - state.beta1 ** step)
        v_hat = v / (1 - state.beta2 ** step)
        updated[name] = theta - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        m_new[name], v_new[name] = m, v
    new_state = OptimizerState(Parameters(m_new), Parameters(v_new), step, state.lr, state.weight_decay,
                               state.beta1, state.beta2, state.eps)
    return Parameters(updated), new_state


@section("train", "training")
@dataclass(frozen=True)
class TrainConfig(ConfigSection):
    """Training-loop settings.

    Attributes:
        epochs: Passes over the training set
        batch_size: Intervals per Adam step
        lr: Adam learning rate
        weight_decay: L2 coefficient
        seed: Seeds initialization and shuffling
        validation_fraction: Share of records held out for validation loss
    """
    epochs: int = field(default=5, metadata={"name": ["epochs"], "type": "int"})
    batch_size: int = field(default=64, metadata={"name": ["batch_size", "batch"], "type": "int"})
    lr: float = field(default=1e-3, metadata={"name": ["lr", "learning_rate"], "type": "float"})
    weight_decay: float = field(default=1e-6, metadata={"name": ["weight_decay", "wd"], "type": "float"})
    seed: int = field(default=0, metadata={"name": ["seed"], "type": "int"})
    validation_fraction: float = field(default=0.0, metadata={"name": ["validation_fraction"], "type": "float"})

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be at least 1")
        if not self.lr > 0 or self.weight_decay < 0:
            raise ConfigError("lr must be positive and weight_decay non-negative")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError(f"validation_fraction must lie in [0, 1), got {self.validation_fraction}")


@dataclass(frozen=True)
class TrainingHistory:
    """Per-epoch mean training loss and, when a validation set exists, its loss."""
    train_loss: Tuple[float, ...]
    validation_loss: Tuple[float | None, ...]

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,validation_loss"]
        for epoch, (train, valid) in enumerate(zip(self.train_loss, self.validation_loss), start=1):
            lines.append(f"{epoch},{train!r},{'' if valid is None else repr(valid)}")
        return "\n".join(lines) + "\n"


def evaluate_loss(params: Parameters, cfg: ModelConfig, inputs: np.ndarray, targets: np.ndarray,
                  batch_size: int = 256) -> float:
    total = 0.0
    for start in range(0, len(inputs), batch_size):
        pred = model_forward(params, cfg, inputs[start:start + batch_size])
        total += bce_loss(pred, targets[start:start + batch_size]) * len(pred)
    return total / len(inputs)


def train(params: Parameters, cfg: ModelConfig, inputs: np.ndarray, targets: np.ndarray, train_cfg: TrainConfig,
          validation: Tuple[np.ndarray, np.ndarray] | None = None) -> Tuple[Parameters, TrainingHistory]:
    """Run ``train_cfg.epochs`` of seeded mini-batch Adam.

    Args:
        params: Initial weights
        cfg: Architecture
        inputs: Intervals of shape (N, L)
        targets: Heatmap targets of shape (N, K, L)
        train_cfg: Loop settings
        validation: Optional held-out (inputs, targets)

    Returns:
        The trained weights and the loss history.
    """
    inputs = np.asarray(inputs, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if len(inputs) == 0:
        raise DataError("Training set is empty")
    if targets.shape != (len(inputs), cfg.K, cfg.L):
        raise ShapeError(f"Targets of shape {targets.shape} do not match {(len(inputs), cfg.K, cfg.L)}")
    logger.info("Training %d parameters on %d intervals", params.size, len(inputs))
    rng = np.random.default_rng(train_cfg.seed)
    state = init_optimizer(params, train_cfg.lr, train_cfg.weight_decay)
    train_losses: List[float] = []
    valid_losses: List[float | None] = []
    for epoch in range(train_cfg.epochs):
        order = rng.permutation(len(inputs))
        total = 0.0
        for start in range(0, len(order), train_cfg.batch_size):
            index = order[start:start + train_cfg.batch_size]
            loss, grads = backward(params, cfg, inputs[index], targets[index])
            params, state = adam_step(params, grads, state)
            total += loss * len(index)
        train_losses.append(total / len(inputs))
        valid = None
        if validation is not None and len(validation[0]):
            valid = evaluate_loss(params, cfg, *validation)
        valid_losses.append(valid)
        logger.info("Epoch %d/%d: train loss %.5f%s", epoch + 1, train_cfg.epochs, train_losses[-1],
                    "" if valid is None else f", validation loss {valid:.5f}")
    return params, TrainingHistory(tuple(train_losses), tuple(valid_losses))
