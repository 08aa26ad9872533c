"""
Optimizer
"""

import math
from typing import Iterable

import numpy as np

from ..core.constants import (
    ADAM_BETA1,
    ADAM_BETA2,
    ADAM_EPS
)
from .tensor import Param


def adam_step(params: Iterable[Param],
              lr: float,
              beta1: float = ADAM_BETA1,
              beta2: float = ADAM_BETA2,
              eps: float = ADAM_EPS,
              weight_decay: float = 0.0):
    """
    Bias-corrected Adam update with decoupled weight decay. Gradients are
    zeroed afterwards.
    """
    for param in params:
        grad = param.grad
        param.step_count += 1
        t = param.step_count
        param.adam_m = beta1 * param.adam_m + (1 - beta1) * grad
        param.adam_v = beta2 * param.adam_v + (1 - beta2) * grad * grad
        m_hat = param.adam_m / (1 - beta1 ** t)
        v_hat = param.adam_v / (1 - beta2 ** t)
        dtype = param.data.dtype
        if weight_decay:
            param.data = param.data * dtype.type(1 - lr * weight_decay)
        param.data = (param.data
                      - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(dtype)
        param.zero_grad()


def clip_grad_norm(params: Iterable[Param], max_norm: float) -> float:
    """
    Rescales gradients so their global L2 norm is at most ``max_norm``.
    Returns the norm before clipping.
    """
    params = list(params)
    total = math.sqrt(sum(float(np.sum(p.grad.astype(np.float64) ** 2))
                          for p in params))
    if max_norm > 0 and total > max_norm:
        factor = max_norm / (total + 1e-6)
        for param in params:
            param.grad *= param.grad.dtype.type(factor)
    return total


class Adam:
    """
    Holds Adam hyperparameters for a fixed parameter set
    """

    def __init__(self,
                 params: Iterable[Param],
                 weight_decay: float = 0.0,
                 beta1: float = ADAM_BETA1,
                 beta2: float = ADAM_BETA2,
                 eps: float = ADAM_EPS):
        self.params = list(params)
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, lr: float):
        """
        Applies one update with learning rate ``lr``
        """
        adam_step(self.params, lr, self.beta1, self.beta2, self.eps,
                  self.weight_decay)

    def zero_grad(self):
        """
        Clears the gradients of all managed parameters
        """
        for param in self.params:
            param.zero_grad()

    def step_count(self) -> int:
        """
        Returns the number of updates applied so far
        """
        return max((p.step_count for p in self.params), default=0)
