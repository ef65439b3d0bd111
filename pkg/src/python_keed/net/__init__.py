from python_keed.net.model import ModelConfig, Parameters, backward, bce_loss, init_parameters, model_forward
from python_keed.net.train import OptimizerState, TrainConfig, adam_step, init_optimizer, train
from python_keed.net.weights import load_weights, save_weights

__all__ = [
    "ModelConfig",
    "OptimizerState",
    "Parameters",
    "TrainConfig",
    "adam_step",
    "backward",
    "bce_loss",
    "init_optimizer",
    "init_parameters",
    "load_weights",
    "model_forward",
    "save_weights",
    "train",
]
