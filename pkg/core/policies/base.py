"""
Policy interface shared by experts, learners and the non-simple strategies.

A policy is called once per step with the history observed so far. Rollouts
pass ``None`` instead of a history whenever ``observes(t)`` is False, which is
how open-loop execution inside a chunk is enforced. Policies that keep state
between calls (chunk buffers) are cloned per trajectory.
"""

import copy
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

POLICY_KINDS = (
    "deterministic",
    "simply_stochastic",
    "gaussian",
    "mixture",
    "gamblers_ruin",
    "concentric",
    "switching",
    "chunked",
    "mlp",
    "toy_diffusion",
)


@dataclass
class History:
    """
    States x_1..x_t and the inputs u_1..u_{t-1} that produced them.

    Entries may be arrays over independent runs for the scalar systems.
    """
    states: List[np.ndarray] = field(default_factory=list)
    inputs: List[np.ndarray] = field(default_factory=list)

    @property
    def current(self) -> np.ndarray:
        return self.states[-1]

    @property
    def t(self) -> int:
        return len(self.states)

    def push(self, x: np.ndarray) -> None:
        self.states.append(x)

    def record(self, u: np.ndarray) -> None:
        self.inputs.append(u)


class Policy(ABC):
    """
    Attributes:
        kind: One of POLICY_KINDS
        deterministic: True when actions ignore the rng
        chunk_len: Length of open-loop blocks (1 for closed-loop policies)
        period: Time period of the action rule, 0 when not periodic
    """

    kind: str = "deterministic"
    deterministic: bool = True
    chunk_len: int = 1
    period: int = 0

    @abstractmethod
    def act(self, history: Optional[History], t: int, rng: np.random.Generator) -> np.ndarray:
        """Input at time t (1-based)."""

    def observes(self, t: int) -> bool:
        """Whether the policy reads the state at time t."""
        return True

    def reset(self) -> None:
        """Clear per-trajectory state."""

    def clone(self) -> 'Policy':
        """Fresh copy for one trajectory."""
        twin = copy.copy(self)
        twin.reset()
        return twin

    def to_dict(self) -> Dict[str, Any]:
        raise NotImplementedError(f"Policy kind '{self.kind}' is not serializable")


class MarkovPolicy(Policy):
    """Policy whose action depends on the current state and time only."""

    @abstractmethod
    def action(self, x: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
        """Input at state x and time t."""

    def act(self, history: Optional[History], t: int, rng: np.random.Generator) -> np.ndarray:
        if history is None:
            raise ValueError(f"{type(self).__name__} needs the state at t={t}")
        return self.action(history.current, t, rng)
