"""
Optimizers over leaf tensors.

- SGD: momentum SGD (backbone and aux training)
- Adam: used by the C&W attack on its tanh-space variable
"""

from typing import List, Sequence

import numpy as np

from src.exceptions import ConfigError, ContractError
from src.tensor import Tensor


class Optimizer:
    def __init__(self, params: Sequence[Tensor], lr: float):
        if not lr > 0:
            raise ConfigError(f"Learning rate must be positive, got {lr}")
        self.params: List[Tensor] = list(params)
        for p in self.params:
            if not p.requires_grad or not p.is_leaf:
                raise ContractError("Optimizer parameters must be trainable leaf tensors")
        self.lr = float(lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def _grad(self, p: Tensor) -> np.ndarray:
        return p.grad if p.grad is not None else np.zeros_like(p.data)


class SGD(Optimizer):
    def __init__(self, params: Sequence[Tensor], lr: float = 0.05, momentum: float = 0.9):
        super().__init__(params, lr)
        if not 0.0 <= momentum < 1.0:
            raise ConfigError(f"Momentum must lie in [0, 1), got {momentum}")
        self.momentum = float(momentum)
        self.velocity = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        for i, p in enumerate(self.params):
            self.velocity[i] = self.momentum * self.velocity[i] + self._grad(p)
            p.assign(p.data - self.lr * self.velocity[i])


class Adam(Optimizer):
    def __init__(self, params: Sequence[Tensor], lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            g = self._grad(p)
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g * g
            m_hat = self.m[i] / (1 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1 - self.beta2 ** self.t)
            p.assign(p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps))
