"""
Scalar gambler system x_{t+1} = xi * rho * x_t + u_t with x_1 = eps0.

The expert knows xi and plays u = -xi * rho * x, so its state is zero from
t = 2 on. A learner that does not know xi is the setting of the gambler's-ruin,
concentric and switching strategies. Arithmetic is elementwise, so one call
advances many independent runs at once.
"""

from typing import Any, Dict, Union

import numpy as np

from core.instances.base import Instance
from core.models.trajectory import InitState
from core.utils.errors import PreconditionError

Scalar = Union[float, np.ndarray]


class GamblerSystem(Instance):
    """
    Attributes:
        rho: Expansion factor, > 1
        xi: Unknown sign, -1 or +1
        eps0: Initial error x_1
    """

    kind = "gambler"
    d = 1

    def __init__(self, rho: float, xi: int = 1, eps0: float = 0.01):
        if rho <= 1.0:
            raise PreconditionError(f"rho must exceed 1, got {rho}")
        if xi not in (-1, 1):
            raise PreconditionError(f"xi must be -1 or +1, got {xi}")
        self.rho = rho
        self.xi = xi
        self.eps0 = eps0

    def step(self, x: np.ndarray, u: np.ndarray, t: int = 1) -> np.ndarray:
        return gambler_step(self, x, u)

    def expert_action(self, x: np.ndarray, t: int = 1) -> np.ndarray:
        return -self.xi * (self.rho * x)

    def sample_init(self, rng: np.random.Generator) -> InitState:
        return InitState(x1=np.array([self.eps0]))

    def cost(self, x: np.ndarray, u: np.ndarray, t: int = 1) -> float:
        """|x|, clipped at 1 by the trajectory cost."""
        return float(np.abs(np.asarray(x)).max())

    def flipped(self) -> 'GamblerSystem':
        return GamblerSystem(self.rho, xi=-self.xi, eps0=self.eps0)

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': self.kind, 'rho': self.rho, 'xi': self.xi, 'eps0': self.eps0}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'GamblerSystem':
        return cls(float(data['rho']), xi=int(data['xi']), eps0=float(data['eps0']))


def gambler_step(system: GamblerSystem, x: Scalar, u: Scalar) -> Scalar:
    """xi * (rho * x) + u, evaluated elementwise."""
    return system.xi * (system.rho * x) + u
