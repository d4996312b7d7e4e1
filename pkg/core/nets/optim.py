"""
Adam with decoupled weight decay and a cosine learning-rate schedule.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np


def cosine_lr(base_lr: float, iteration: int, total: int, final_fraction: float = 0.0) -> float:
    """Cosine decay from ``base_lr`` to ``final_fraction * base_lr`` over ``total`` steps."""
    if total <= 1:
        return base_lr
    progress = min(1.0, iteration / (total - 1))
    floor = final_fraction * base_lr
    return floor + 0.5 * (base_lr - floor) * (1.0 + math.cos(math.pi * progress))


@dataclass
class AdamW:
    """
    Adam moments with weight decay applied directly to the parameters.

    Parameters are updated in place so networks holding them see the change.
    """
    lr: float = 1e-3
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step_count: int = 0
    _m: List[np.ndarray] = field(default_factory=list, repr=False)
    _v: List[np.ndarray] = field(default_factory=list, repr=False)

    def step(self, params: List[np.ndarray], grads: List[np.ndarray], lr: Optional[float] = None) -> None:
        lr = self.lr if lr is None else lr
        if not self._m:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.step_count += 1
        bias1 = 1.0 - self.beta1 ** self.step_count
        bias2 = 1.0 - self.beta2 ** self.step_count
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * self.weight_decay * p
            p -= lr * (m / bias1) / (np.sqrt(v / bias2) + self.eps)
