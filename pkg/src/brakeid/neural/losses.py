"""Scalar losses and their gradients with respect to the prediction."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatch

EPS = 1e-7


def _pair(pred, target):
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeMismatch(f"prediction {pred.shape} vs target {target.shape}")
    return pred, target


def loss_mse(pred, target) -> float:
    pred, target = _pair(pred, target)
    return float(np.mean((pred - target) ** 2))


def grad_mse(pred, target):
    pred, target = _pair(pred, target)
    return 2.0 * (pred - target) / pred.size


def loss_bce(pred, target) -> float:
    """Binary cross entropy, mean over elements, probabilities clipped to [eps, 1-eps]."""
    pred, target = _pair(pred, target)
    p = np.clip(pred, EPS, 1.0 - EPS)
    return float(-np.mean(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)))


def grad_bce(pred, target):
    pred, target = _pair(pred, target)
    p = np.clip(pred, EPS, 1.0 - EPS)
    return (p - target) / (p * (1.0 - p)) / pred.size


def loss_ce(pred, target) -> float:
    """Categorical cross entropy for softmax rows against one-hot rows, mean over rows."""
    pred, target = _pair(pred, target)
    p = np.clip(pred, EPS, 1.0 - EPS)
    return float(-np.sum(target * np.log(p)) / pred.shape[0])


def grad_ce(pred, target):
    pred, target = _pair(pred, target)
    p = np.clip(pred, EPS, 1.0 - EPS)
    return -target / p / pred.shape[0]


def grad_softmax_ce(probs, target):
    """Fused softmax + CE gradient with respect to the softmax *logits*."""
    probs, target = _pair(probs, target)
    return (probs - target) / probs.shape[0]


LOSSES = {
    "mse": (loss_mse, grad_mse),
    "bce": (loss_bce, grad_bce),
    "ce": (loss_ce, grad_ce),
}
