"""
Strategies for the scalar gambler system that beat every simple policy.

All of them act elementwise, so a history whose states are arrays advances
many independent runs in one call.
"""

from typing import Any, Dict, Optional

import numpy as np

from core.policies.base import History, MarkovPolicy, Policy


class GamblersRuinPolicy(MarkovPolicy):
    """u = +rho x or -rho x with probability 1/2 each; the state is zeroed or doubled."""

    kind = "gamblers_ruin"
    deterministic = False

    def __init__(self, rho: float):
        self.rho = rho

    def action(self, x, t: int, rng: np.random.Generator):
        push = self.rho * x
        signs = np.where(rng.random(np.shape(x)) < 0.5, 1.0, -1.0)
        return signs * push

    def mean(self, x, t: int = 1):
        return 0.0 * x

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'gamblers_ruin', 'rho': self.rho}


def gamblers_ruin_policy(rho: float) -> GamblersRuinPolicy:
    return GamblersRuinPolicy(rho)


def interval_index(x, rho: float) -> np.ndarray:
    """
    j(x) with |x| in ((2 rho)^(-2j), (2 rho)^(-2(j-1))].

    Zero maps to index 0.
    """
    q = (2.0 * rho) ** 2
    mag = np.abs(np.asarray(x, dtype=float))
    safe = np.where(mag > 0.0, mag, 1.0)
    j = np.floor(-np.log(safe) / np.log(q)).astype(np.int64) + 1
    # the logarithm can land one interval off near the endpoints
    j = np.where(safe > q ** (-(j - 1.0)), j - 1, j)
    j = np.where(safe <= q ** (-j.astype(float)), j + 1, j)
    return np.where(mag > 0.0, j, 0)


class ConcentricPolicy(MarkovPolicy):
    """u = +rho x when j(x) is even, -rho x when it is odd; u(0) = 0."""

    kind = "concentric"

    def __init__(self, rho: float):
        self.rho = rho

    def action(self, x, t: int = 1, rng: Optional[np.random.Generator] = None):
        push = self.rho * x
        even = interval_index(x, self.rho) % 2 == 0
        out = np.where(even, push, -push)
        return float(out) if np.ndim(x) == 0 else out

    def mean(self, x, t: int = 1):
        return self.action(x, t)

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'concentric', 'rho': self.rho}


def concentric_policy(rho: float) -> ConcentricPolicy:
    return ConcentricPolicy(rho)


class SwitchingPolicy(MarkovPolicy):
    """u = -rho x at odd t and +rho x at even t."""

    kind = "switching"
    period = 2

    def __init__(self, rho: float):
        self.rho = rho

    def action(self, x, t: int, rng: Optional[np.random.Generator] = None):
        push = self.rho * x
        return -push if t % 2 == 1 else push

    def mean(self, x, t: int = 1):
        return self.action(x, t)

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'switching', 'rho': self.rho}


class HistorySwitchingPolicy(Policy):
    """
    Plays -rho x_1 first, reads xi * rho off (x_2 - u_1) / x_1 and then
    cancels the dynamics with u_t = -((x_2 - u_1) / x_1) x_t.
    """

    kind = "switching"

    def __init__(self, rho: float):
        self.rho = rho

    def act(self, history: Optional[History], t: int, rng: np.random.Generator):
        if history is None:
            raise ValueError("HistorySwitchingPolicy needs the history")
        x = history.current
        if t == 1:
            return -(self.rho * x)
        x1, x2, u1 = history.states[0], history.states[1], history.inputs[0]
        x1_arr = np.asarray(x1, dtype=float)
        nonzero = x1_arr != 0.0
        gain = np.where(nonzero, (x2 - u1) / np.where(nonzero, x1_arr, 1.0), 0.0)
        out = -gain * x
        return float(out) if np.ndim(out) == 0 else out

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'history_switching', 'rho': self.rho}


def switching_policy(rho: float, history_dependent: bool = False) -> Policy:
    """Period-2 switching rule, or its history-dependent identification variant."""
    return HistorySwitchingPolicy(rho) if history_dependent else SwitchingPolicy(rho)
