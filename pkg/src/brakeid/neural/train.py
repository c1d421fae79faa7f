"""Mini-batch training with Adam and early stopping.

:func:`train` drives any *objective* exposing

* ``params()`` -> list of arrays updated in place,
* ``loss_and_grads(x, y)`` -> ``(loss, grads)`` aligned with ``params()``,
* ``loss(x, y)`` -> scalar without caching.

:class:`SupervisedObjective` adapts a :class:`LayerStack` plus a loss kind;
the tandem inverse models in :mod:`brakeid.inverse` supply their own.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ..errors import Diverged, ShapeMismatch
from ..rng import make_rng
from . import losses
from .layers import LayerStack, Softmax
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    learning_rate: float = 5e-4
    batch_size: int = 128
    max_epochs: int = 2000
    early_stop_patience: int = 50
    seed: int = 0
    loss_kind: str = "mse"  # mse | bce | ce | composite

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.early_stop_patience < 1:
            raise ValueError("early_stop_patience must be >= 1")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.loss_kind not in ("mse", "bce", "ce", "composite"):
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class History:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0

    def rows(self):
        return [(i + 1, t, v) for i, (t, v) in enumerate(zip(self.train_loss, self.val_loss))]

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss"]
        lines += [f"{e},{t!r},{v!r}" for e, t, v in self.rows()]
        return "\n".join(lines) + "\n"


class SupervisedObjective:
    """``stack(x)`` against ``y`` under one of the plain losses."""

    def __init__(self, stack: LayerStack, loss_kind: str):
        if loss_kind not in losses.LOSSES:
            raise ValueError(f"unsupported loss kind {loss_kind!r}")
        self.stack = stack
        self.loss_kind = loss_kind
        self._loss, self._grad = losses.LOSSES[loss_kind]
        self._fused = loss_kind == "ce" and isinstance(stack.layers[-1], Softmax)

    def params(self):
        return self.stack.trainable_params()

    def loss(self, x, y) -> float:
        return self._loss(self.stack.forward(x), y)

    def loss_and_grads(self, x, y):
        pred = self.stack.forward(x, training=True)
        if pred.shape != np.shape(y):
            raise ShapeMismatch(f"prediction {pred.shape} vs target {np.shape(y)}")
        value = self._loss(pred, y)
        if self._fused:
            self.stack.backward(losses.grad_softmax_ce(pred, y), start=len(self.stack.layers) - 1)
        else:
            self.stack.backward(self._grad(pred, y))
        return value, self.stack.trainable_grads()


def train(objective, train_data, val_data, cfg: TrainConfig, log_every: int = 0) -> History:
    """Fit ``objective`` in place; on return its parameters are the best-validation ones."""
    x_tr, y_tr = train_data
    x_val, y_val = val_data
    n = x_tr.shape[0]
    if n == 0 or x_val.shape[0] == 0:
        raise ValueError("train and validation partitions must be non-empty")
    params = objective.params()
    state = AdamState.zeros_like(params)
    rng = make_rng(cfg.seed, "shuffle")
    hist = History()
    best = math.inf
    best_params = [p.copy() for p in params]
    stale = 0

    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            value, grads = objective.loss_and_grads(x_tr[idx], y_tr[idx])
            if not math.isfinite(value):
                raise Diverged(f"non-finite training loss at epoch {epoch}")
            total += value * idx.size
            if params:
                adam_step(params, grads, state, cfg.learning_rate)
        train_loss = total / n
        val_loss = float(objective.loss(x_val, y_val))
        if not math.isfinite(val_loss):
            raise Diverged(f"non-finite validation loss at epoch {epoch}")
        hist.train_loss.append(train_loss)
        hist.val_loss.append(val_loss)
        if log_every and epoch % log_every == 0:
            log.info("epoch %d train %.6g val %.6g", epoch, train_loss, val_loss)
        if val_loss < best:
            best = val_loss
            hist.best_epoch = epoch
            for dst, src in zip(best_params, params):
                dst[...] = src
            stale = 0
        else:
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    hist.stopped_epoch = epoch
    for dst, src in zip(params, best_params):
        dst[...] = src
    return hist
