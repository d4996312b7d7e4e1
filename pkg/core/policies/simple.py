"""
Expert wrapper, fixed linear laws and simply-stochastic policies.

A simply-stochastic policy is a deterministic mean plus noise whose law does
not depend on the state, so under a shared noise draw u(x) - u(x') is the
difference of the means.
"""

from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from core.instances.base import Instance
from core.policies.base import MarkovPolicy, Policy

RANDOM_NOISE_VARIANCE = 1.0 / 6.0


class ExpertPolicy(MarkovPolicy):
    """The instance's own expert."""

    kind = "deterministic"

    def __init__(self, inst: Instance):
        self.inst = inst

    def action(self, x: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
        return self.inst.expert_action(x, t)

    def mean(self, x: np.ndarray, t: int = 1) -> np.ndarray:
        return self.inst.expert_action(x, t)

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'expert'}


class LinearPolicy(MarkovPolicy):
    """u = K x."""

    kind = "deterministic"

    def __init__(self, K: np.ndarray):
        self.K = np.asarray(K, dtype=float)

    def action(self, x: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
        return self.K @ x

    def mean(self, x: np.ndarray, t: int = 1) -> np.ndarray:
        return self.K @ x

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'linear', 'K': self.K.tolist()}


class ZeroPolicy(MarkovPolicy):
    """u = 0."""

    kind = "deterministic"

    def __init__(self, d: int):
        self.d = d

    def action(self, x: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=float))

    def mean(self, x: np.ndarray, t: int = 1) -> np.ndarray:
        return np.zeros(self.d)

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'zero', 'd': self.d}


class GaussianPolicy(MarkovPolicy):
    """base(x) + sigma * N(0, I)."""

    kind = "gaussian"
    deterministic = False

    def __init__(self, base: MarkovPolicy, sigma: float, d: int):
        if not base.deterministic:
            raise ValueError("gaussian_wrap needs a deterministic base policy")
        if sigma < 0:
            raise ValueError(f"sigma must be non-negative, got {sigma}")
        self.base = base
        self.sigma = sigma
        self.d = d

    def action(self, x: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
        mean = self.base.action(x, t, rng)
        if self.sigma == 0.0:
            return mean
        return mean + self.sigma * rng.standard_normal(self.d)

    def mean(self, x: np.ndarray, t: int = 1) -> np.ndarray:
        return self.base.mean(x, t)

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'gaussian', 'sigma': self.sigma, 'd': self.d, 'base': self.base.to_dict()}


def gaussian_wrap(base: MarkovPolicy, sigma: float, d: int) -> GaussianPolicy:
    """Add state-independent N(0, sigma^2 I) noise to a deterministic policy."""
    return GaussianPolicy(base, sigma, d)


class RandomNoisePolicy(MarkovPolicy):
    """u ~ N(0, variance * I), fresh every step and independent of the state."""

    kind = "simply_stochastic"
    deterministic = False

    def __init__(self, d: int, variance: float = RANDOM_NOISE_VARIANCE):
        self.d = d
        self.variance = variance

    def action(self, x: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
        return np.sqrt(self.variance) * rng.standard_normal(self.d)

    def mean(self, x: np.ndarray, t: int = 1) -> np.ndarray:
        return np.zeros(self.d)

    def to_dict(self) -> Dict[str, Any]:
        return {'type': 'random_noise', 'd': self.d, 'variance': self.variance}


class MixturePolicy(MarkovPolicy):
    """Pick component j with probability weights[j], then play its action."""

    kind = "mixture"
    deterministic = False

    def __init__(self, components: Sequence[MarkovPolicy], weights: Optional[Sequence[float]] = None):
        if not components:
            raise ValueError("A mixture needs at least one component")
        self.components: List[MarkovPolicy] = list(components)
        weights = np.ones(len(components)) if weights is None else np.asarray(weights, dtype=float)
        if weights.shape[0] != len(components) or np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("Mixture weights must be non-negative, one per component, not all zero")
        self.weights = weights / weights.sum()

    def action(self, x: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
        j = int(rng.choice(len(self.components), p=self.weights))
        return self.components[j].action(x, t, rng)

    def mean(self, x: np.ndarray, t: int = 1) -> np.ndarray:
        return sum(w * c.mean(x, t) for w, c in zip(self.weights, self.components))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'type': 'mixture',
            'weights': self.weights.tolist(),
            'components': [c.to_dict() for c in self.components],
        }


def is_simple(policy: Policy) -> bool:
    """
    Deterministic or state-independent noise around a mean.

    A mixture is simple only when its weighted components are simple and
    identical; mixing distinct means makes the noise depend on the state.
    """
    if isinstance(policy, MixturePolicy):
        active = [c for w, c in zip(policy.weights, policy.components) if w > 0]
        first = active[0].to_dict()
        return all(is_simple(c) for c in active) and all(c.to_dict() == first for c in active[1:])
    return policy.kind in ("deterministic", "simply_stochastic", "gaussian", "mlp")
