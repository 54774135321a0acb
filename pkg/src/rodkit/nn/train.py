from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .._validation import check_count, check_positive
from ..exceptions import ConfigError, DimensionError, NumericalError
from .model import ParamStore, loss_and_grad

log = logging.getLogger(__name__)

NORMALIZATIONS = ("per-frame-complex-std", "dataset-std", "none")


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-3
    batch_size: int = 4
    epochs: int = 10
    optimizer: str = "adam"
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    sigmoid_clamp_eps: float = 1e-7
    normalization: str = "per-frame-complex-std"
    rng_seed: int = 0
    checkpoint_every: int = 0
    checkpoint_path: str | None = None

    def __post_init__(self):
        check_positive("learning_rate", self.learning_rate, strict=False)
        check_count("batch_size", self.batch_size)
        check_count("epochs", self.epochs, 0)
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")
        if not 0 < self.sigmoid_clamp_eps <= 1e-3:
            raise ConfigError("sigmoid_clamp_eps must lie in (0, 1e-3]")
        if self.normalization not in NORMALIZATIONS:
            raise ConfigError(f"normalization must be one of {NORMALIZATIONS}")


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict = {}
        self.v: dict = {}

    def step(self, params: ParamStore, grads: dict):
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for name, g in grads.items():
            p = params.tensors[name]
            m = self.m.setdefault(name, np.zeros_like(p))
            v = self.v.setdefault(name, np.zeros_like(p))
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype, copy=False)


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, params: ParamStore, grads: dict):
        for name, g in grads.items():
            params.tensors[name] -= (self.lr * g).astype(params.tensors[name].dtype, copy=False)


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return SGD(cfg.learning_rate)
    return Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)


def train(model: ParamStore, X, Y, cfg: TrainConfig, on_epoch=None):
    """Minibatch training on ``(snippet, ConfMap)`` pairs.

    ``X`` is ``(n, 2, tau, R, A)`` network input, ``Y`` is ``(n, C, tau, R, A)``
    targets. Returns ``(model, losses)`` where ``losses`` holds the mean
    per-snippet loss of each epoch. The model is updated in place.
    """
    X = np.asarray(X)
    Y = np.asarray(Y)
    if len(X) == 0:
        raise DimensionError("training set is empty")
    if len(X) != len(Y):
        raise DimensionError(f"{len(X)} inputs but {len(Y)} targets")
    dtype = next(iter(model.tensors.values())).dtype
    rng = np.random.default_rng(cfg.rng_seed)
    opt = make_optimizer(cfg)
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(X))
        total = 0.0
        for start in range(0, len(order), cfg.batch_size):
            idx = np.sort(order[start: start + cfg.batch_size])
            loss, grads = loss_and_grad(model, X[idx].astype(dtype, copy=False),
                                        Y[idx].astype(dtype, copy=False), cfg.sigmoid_clamp_eps)
            if not math.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise NumericalError(
                    f"non-finite loss/gradient at epoch {epoch}, batch starting {start} (loss={loss})")
            opt.step(model, grads)
            total += loss
        losses.append(total / len(X))
        log.info("epoch %d loss %.4f", epoch, losses[-1])
        if on_epoch is not None:
            on_epoch(epoch, losses[-1], model)
        if cfg.checkpoint_every and cfg.checkpoint_path and (epoch + 1) % cfg.checkpoint_every == 0:
            from ..io import save_checkpoint

            save_checkpoint(cfg.checkpoint_path, model)
    return model, losses
