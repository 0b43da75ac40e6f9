"""SGD, Adagrad and Adam over lists of :class:`Tensor` parameters."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor


class OptimizerError(ValueError):
    pass


class Optimizer:
    kind = "base"

    def __init__(self, params: Sequence[Tensor], lr: float):
        if lr <= 0:
            raise OptimizerError(f"learning rate must be positive, got {lr}")
        self.params = list(params)
        self.lr = float(lr)
        self.step_count = 0
        self.buffers: dict[str, list[np.ndarray]] = {}

    def _grads(self) -> list[np.ndarray]:
        grads = []
        for i, p in enumerate(self.params):
            if p.grad is None:
                raise OptimizerError(f"parameter {p.name or i} has no gradient; call backward() first")
            if p.grad.shape != p.values.shape:
                raise OptimizerError(f"gradient shape {p.grad.shape} does not match parameter {p.values.shape}")
            grads.append(p.grad)
        return grads

    def step(self) -> None:
        grads = self._grads()
        self.step_count += 1
        for i, (p, g) in enumerate(zip(self.params, grads)):
            self._update(i, p, g)
            p.grad = np.zeros_like(p.values)

    def _update(self, i: int, p: Tensor, g: np.ndarray) -> None:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


class SGD(Optimizer):
    kind = "sgd"

    def _update(self, i, p, g):
        p.values -= p.values.dtype.type(self.lr) * g


class Adagrad(Optimizer):
    kind = "adagrad"

    def __init__(self, params, lr: float = 0.01, eps: float = 1e-10):
        super().__init__(params, lr)
        self.eps = eps
        self.buffers["sum_sq"] = [np.zeros_like(p.values) for p in self.params]

    def _update(self, i, p, g):
        acc = self.buffers["sum_sq"][i]
        acc += g * g
        p.values -= (self.lr * g / (np.sqrt(acc) + self.eps)).astype(p.values.dtype, copy=False)


class Adam(Optimizer):
    kind = "adam"

    def __init__(self, params, lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.buffers["m"] = [np.zeros_like(p.values) for p in self.params]
        self.buffers["v"] = [np.zeros_like(p.values) for p in self.params]

    def _update(self, i, p, g):
        m, v = self.buffers["m"][i], self.buffers["v"][i]
        m *= self.beta1
        m += (1.0 - self.beta1) * g
        v *= self.beta2
        v += (1.0 - self.beta2) * g * g
        t = self.step_count
        m_hat = m / (1.0 - self.beta1**t)
        v_hat = v / (1.0 - self.beta2**t)
        p.values -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.values.dtype, copy=False)


OPTIMIZERS = {"sgd": SGD, "adagrad": Adagrad, "adam": Adam}


def make_optimizer(kind: str, params: Sequence[Tensor], lr: float) -> Optimizer:
    try:
        cls = OPTIMIZERS[kind.lower()]
    except KeyError:
        raise OptimizerError(f"unknown optimizer {kind!r}; choose from {sorted(OPTIMIZERS)}") from None
    return cls(params, lr=lr)
