"""
Common interface of the hard constructions.

An instance bundles the expert policy, the dynamics, the initial state
distribution and the per-step cost. Instances are immutable once built, so
every method is safe to call from concurrent rollouts.
"""

import hashlib
import json
from abc import ABC, abstractmethod
from typing import Any, Dict

import numpy as np

from core.models.trajectory import InitState


class Instance(ABC):
    """Base class for (expert, dynamics, initial distribution, cost) bundles."""

    kind: str = "instance"
    d: int

    @abstractmethod
    def step(self, x: np.ndarray, u: np.ndarray, t: int = 1) -> np.ndarray:
        """Next state f(x, u) at time t."""

    @abstractmethod
    def expert_action(self, x: np.ndarray, t: int = 1) -> np.ndarray:
        """Expert input at state x and time t."""

    @abstractmethod
    def sample_init(self, rng: np.random.Generator) -> InitState:
        """Draw an initial state."""

    @abstractmethod
    def cost(self, x: np.ndarray, u: np.ndarray, t: int = 1) -> float:
        """Unclipped per-step cost."""

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        """Every parameter needed to rebuild the instance bit-exactly."""

    def traj_cost(self, states: np.ndarray, inputs: np.ndarray, blown_up: bool = False) -> float:
        """max_t min(1, cost(x_t, u_t)); a blown-up trajectory costs the clip value 1."""
        if blown_up:
            return 1.0
        worst = 0.0
        for t in range(states.shape[0]):
            worst = max(worst, min(1.0, self.cost(states[t], inputs[t], t + 1)))
            if worst >= 1.0:
                break
        return worst

    @property
    def instance_id(self) -> str:
        cached = getattr(self, "_instance_id", None)
        if cached is None:
            payload = json.dumps(self.to_dict(), sort_keys=True).encode("utf-8")
            cached = f"{self.kind}-{hashlib.sha256(payload).hexdigest()[:12]}"
            object.__setattr__(self, "_instance_id", cached)
        return cached
