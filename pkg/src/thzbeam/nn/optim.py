from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError


@dataclass(frozen=True)
class OptimizerConfig:
    kind: str = "sgd_momentum"
    learning_rate: float = 1e-3
    momentum: float = 0.8
    lr_decay_factor: float = 0.1
    lr_decay_epoch: int = 80
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def problems(self, name="optimizer"):
        out = []
        if self.kind not in ("sgd_momentum", "adam"):
            out.append(f"{name}.kind must be sgd_momentum or adam")
        if not self.learning_rate > 0:
            out.append(f"{name}.learning_rate must be > 0")
        if not 0 <= self.momentum < 1:
            out.append(f"{name}.momentum must be in [0, 1)")
        if not 0 < self.lr_decay_factor <= 1:
            out.append(f"{name}.lr_decay_factor must be in (0, 1]")
        if self.lr_decay_epoch < 1:
            out.append(f"{name}.lr_decay_epoch must be >= 1")
        return out

    def lr_at(self, epoch):
        return self.learning_rate * self.lr_decay_factor ** (epoch // self.lr_decay_epoch)


class SGDMomentum:
    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.velocity = None

    def step(self, params, grads, epoch):
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        lr = self.config.lr_at(epoch)
        m = self.config.momentum
        for p, g, v in zip(params, grads, self.velocity):
            v *= m
            v -= lr * g
            p += v


class Adam:
    def __init__(self, config: OptimizerConfig):
        self.config = config
        self.m = self.v = None
        self.t = 0

    def step(self, params, grads, epoch):
        c = self.config
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        lr = c.lr_at(epoch)
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= lr * (m / bc1) / (np.sqrt(v / bc2) + c.epsilon)


def make_optimizer(config: OptimizerConfig):
    problems = config.problems()
    if problems:
        raise ConfigError(problems)
    return SGDMomentum(config) if config.kind == "sgd_momentum" else Adam(config)


def optimizer_step(params, grads, config: OptimizerConfig, epoch, state=None):
    """Functional single step; ``state`` is the optimizer object to continue from."""
    opt = state if state is not None else make_optimizer(config)
    opt.step(params, grads, epoch)
    return opt
