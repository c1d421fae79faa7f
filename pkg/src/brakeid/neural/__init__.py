"""Small deterministic neural-network engine (numpy, float64)."""

from .layers import (
    LAYER_KINDS,
    Conv2D,
    Dense,
    Flatten,
    Layer,
    LayerStack,
    MaxPool2D,
    ReLU,
    Sigmoid,
    Softmax,
    mlp,
)
from .losses import grad_bce, grad_ce, grad_mse, loss_bce, loss_ce, loss_mse
from .optim import AdamState, adam_step
from .serialize import load_model, save_model, stack_from_dict, stack_to_dict
from .train import History, SupervisedObjective, TrainConfig, train

__all__ = [
    "LAYER_KINDS", "Conv2D", "Dense", "Flatten", "Layer", "LayerStack", "MaxPool2D",
    "ReLU", "Sigmoid", "Softmax", "mlp",
    "grad_bce", "grad_ce", "grad_mse", "loss_bce", "loss_ce", "loss_mse",
    "AdamState", "adam_step",
    "load_model", "save_model", "stack_from_dict", "stack_to_dict",
    "History", "SupervisedObjective", "TrainConfig", "train",
]
