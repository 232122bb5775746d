"""AdamW with decoupled weight decay.

Decay multiplies the parameter by (1 - lr*wd) before the moment update, so
regularization never leaks into the running moments. All state lives in
per-parameter numpy buffers; identical inputs give bitwise-identical steps.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .autodiff import Parameter
from .errors import IllegalStateError, InvalidArgumentError


@dataclass(frozen=True)
class AdamWConfig:
    learning_rate: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if not 0.0 <= self.weight_decay < 1.0:
            raise InvalidArgumentError("weight_decay must be in [0, 1)")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise InvalidArgumentError("betas must be in [0, 1)")
        if not self.epsilon > 0:
            raise InvalidArgumentError("epsilon must be positive")


class AdamW:
    """Stateful optimizer over a fixed parameter list."""

    def __init__(self, params: Iterable[Parameter], config: AdamWConfig):
        self.params = list(params)
        if not self.params:
            raise InvalidArgumentError("AdamW: empty parameter list")
        self.config = config
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grads(self) -> None:
        for p in self.params:
            p.grad = np.zeros_like(p.data)

    def step(self) -> None:
        """Apply one update; requires every trainable param to carry a gradient."""
        c = self.config
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - c.beta1**t
        bc2 = 1.0 - c.beta2**t
        for p, m, v in zip(self.params, self._m, self._v):
            if not p.trainable:
                continue
            if p.grad is None:
                raise IllegalStateError("AdamW.step: parameter has no gradient")
            g = p.grad
            if c.weight_decay != 0.0:
                p.data *= 1.0 - c.learning_rate * c.weight_decay
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * (g * g)
            m_hat = m / bc1
            v_hat = v / bc2
            p.data -= c.learning_rate * m_hat / (np.sqrt(v_hat) + c.epsilon)
