"""First-order optimizers: SGD, RMSProp, Adam and Adamax.

Each optimizer owns per-parameter moment buffers shaped like its
parameters and a step counter that increases by one per ``step()``.
Hyper-constants follow the conventional defaults (beta1 = 0.9,
beta2 = 0.999, eps = 1e-8, RMSProp decay rho = 0.9); only the learning
rate and the optimizer kind are tuned by the search harness.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from .errors import DimensionError, ParameterError

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8
RMS_DECAY = 0.9


class Optimizer:
    def __init__(self, params: list[Tensor], lr: float):
        if lr <= 0:
            raise ParameterError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = float(lr)
        self.t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            if p.grad.shape != p.data.shape:
                raise DimensionError(
                    f"gradient shape {p.grad.shape} does not match parameter {p.data.shape}"
                )
            self._update(i, p)

    def _update(self, i: int, p: Tensor) -> None:
        raise NotImplementedError


class SGD(Optimizer):
    def _update(self, i: int, p: Tensor) -> None:
        p.data = p.data - self.lr * p.grad


class RMSProp(Optimizer):
    def __init__(self, params, lr, rho: float = RMS_DECAY, eps: float = EPS):
        super().__init__(params, lr)
        self.rho = rho
        self.eps = eps
        self.v = [np.zeros_like(p.data) for p in self.params]

    def _update(self, i: int, p: Tensor) -> None:
        self.v[i] = self.rho * self.v[i] + (1.0 - self.rho) * p.grad**2
        p.data = p.data - self.lr * p.grad / (np.sqrt(self.v[i]) + self.eps)


class Adam(Optimizer):
    def __init__(self, params, lr, beta1: float = BETA1, beta2: float = BETA2, eps: float = EPS):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def _update(self, i: int, p: Tensor) -> None:
        g = p.grad
        self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
        self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g**2
        m_hat = self.m[i] / (1.0 - self.beta1**self.t)
        v_hat = self.v[i] / (1.0 - self.beta2**self.t)
        p.data = p.data - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Adamax(Optimizer):
    """Adam variant with an infinity-norm second moment: u = max(beta2*u, |g|)."""

    def __init__(self, params, lr, beta1: float = BETA1, beta2: float = BETA2, eps: float = EPS):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.u = [np.zeros_like(p.data) for p in self.params]

    def _update(self, i: int, p: Tensor) -> None:
        g = p.grad
        self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
        self.u[i] = np.maximum(self.beta2 * self.u[i], np.abs(g))
        p.data = p.data - (self.lr / (1.0 - self.beta1**self.t)) * self.m[i] / (self.u[i] + self.eps)


OPTIMIZER_KINDS = ("Adam", "Adamax", "RMSProp", "SGD")

_FACTORY = {
    "adam": Adam,
    "adamax": Adamax,
    "rmsprop": RMSProp,
    "sgd": SGD,
}


def make_optimizer(kind: str, params: list[Tensor], lr: float) -> Optimizer:
    """Build an optimizer by (case-insensitive) name."""
    try:
        cls = _FACTORY[kind.lower()]
    except KeyError:
        raise ParameterError(
            f"unknown optimizer {kind!r}; expected one of {OPTIMIZER_KINDS}"
        ) from None
    return cls(params, lr)
