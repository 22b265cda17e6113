"""
Optimizers applying a descent direction to parameters in place.

Both engines hand over descent directions (PC: the weight gradient of the
free energy; BP: the negated loss gradient), so every optimizer adds its
scaled step. Each step reports how many scalars actually moved.
"""

import numpy as np

from pcnta.core.tensor_ops import Tensor
from pcnta.engine.config import OptimizerConfig, OptimizerKind


class Optimizer:
    """Plain SGD: θ ← θ + η·d."""

    def __init__(self, lr: float) -> None:
        self.lr = lr

    def delta(self, slot: int, direction: Tensor) -> Tensor:
        return self.lr * direction

    def apply(self, params: list[Tensor], directions: list[Tensor], threshold: float = 0.0) -> int:
        """
        Update params in place.

        Args:
            params: parameter tensors, mutated
            directions: descent directions, same shapes
            threshold: count a scalar as updated when |Δθ| > threshold

        Returns:
            Number of scalars whose applied delta exceeded the threshold
        """
        count = 0
        for slot, (param, direction) in enumerate(zip(params, directions, strict=True)):
            step = self.delta(slot, direction)
            param += step
            count += int(np.count_nonzero(np.abs(step) > threshold))
        return count


class Adam(Optimizer):
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
        super().__init__(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m: dict[int, Tensor] = {}
        self.v: dict[int, Tensor] = {}
        self.t: dict[int, int] = {}

    def delta(self, slot: int, direction: Tensor) -> Tensor:
        m = self.m.get(slot, np.zeros_like(direction))
        v = self.v.get(slot, np.zeros_like(direction))
        t = self.t.get(slot, 0) + 1
        m = self.beta1 * m + (1.0 - self.beta1) * direction
        v = self.beta2 * v + (1.0 - self.beta2) * direction * direction
        self.m[slot], self.v[slot], self.t[slot] = m, v, t
        m_hat = m / (1.0 - self.beta1 ** t)
        v_hat = v / (1.0 - self.beta2 ** t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class Adagrad(Optimizer):
    def __init__(self, lr: float, eps: float = 1e-8) -> None:
        super().__init__(lr)
        self.eps = eps
        self.sq: dict[int, Tensor] = {}

    def delta(self, slot: int, direction: Tensor) -> Tensor:
        sq = self.sq.get(slot, np.zeros_like(direction)) + direction * direction
        self.sq[slot] = sq
        return self.lr * direction / (np.sqrt(sq) + self.eps)


def build_optimizer(config: OptimizerConfig, lr: float) -> Optimizer:
    if config.kind is OptimizerKind.ADAM:
        return Adam(lr, config.beta1, config.beta2, config.eps)
    if config.kind is OptimizerKind.ADAGRAD:
        return Adagrad(lr, config.eps)
    return Optimizer(lr)


def flatten_params(params: list[tuple[Tensor, Tensor]]) -> list[Tensor]:
    return [tensor for pair in params for tensor in pair]
