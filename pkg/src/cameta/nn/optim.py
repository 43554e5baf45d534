"""Adam with the step-decayed learning-rate schedule."""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidParams, NaNDetected

IMS, DMS = "IMS", "DMS"


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.001
    lr_decay: float = 0.75
    decay_every: int = 8
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 20
    batch_size: int = 1
    mode: str = DMS
    seed: int = 0
    layers_per_step: int = 1

    def __post_init__(self):
        if not self.lr > 0:
            raise InvalidParams("lr must be positive")
        if self.mode not in (IMS, DMS):
            raise InvalidParams(f"mode must be {IMS} or {DMS}")
        if self.epochs < 0:
            raise InvalidParams("epochs must be >= 0")
        if self.layers_per_step < 1:
            raise InvalidParams("layers_per_step must be >= 1")
        if self.batch_size != 1:
            raise InvalidParams("only batch_size 1 is supported")


def learning_rate(cfg, epoch):
    return cfg.lr * cfg.lr_decay ** (epoch // cfg.decay_every)


class Adam:
    def __init__(self, params, cfg):
        self.cfg = cfg
        self.m = {k: np.zeros_like(v) for k, v in params.values.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.values.items()}
        self.t = 0

    def step(self, params, epoch):
        """Apply one update from ``params.grads`` at the lr of ``epoch``."""
        c = self.cfg
        for k, g in params.grads.items():
            if not np.all(np.isfinite(g)):
                raise NaNDetected(f"non-finite gradient in block {k} at epoch {epoch}")
        self.t += 1
        lr = learning_rate(c, epoch)
        b1t = 1.0 - c.beta1 ** self.t
        b2t = 1.0 - c.beta2 ** self.t
        for k, g in params.grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            params.values[k] -= lr * (m / b1t) / (np.sqrt(v / b2t) + c.eps)
        params.check_finite()
        return lr


def adam_step(params, optimizer, epoch):
    return optimizer.step(params, epoch)
