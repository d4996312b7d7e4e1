"""
Stable embedding construction.

The challenging pair (A_i, K_i) acts on the first two coordinates. A copy of
a regression problem sits on the patch around x_offset = 3 e3, where the
expert pushes along e1 by tau * g(z). Data from the origin branch never
excites e1, so it cannot tell i = 1 from i = 2.
"""

from typing import Any, Dict, Optional

import numpy as np

from core.funclass.hard_function import RegressionTarget, target_from_dict
from core.instances.base import Instance
from core.matkit.bump import bump_radial
from core.matkit.linalg import challenging_pair, embed_top_left
from core.matkit.sampling import sample_unit_ball
from core.models.trajectory import InitState
from core.utils.errors import PreconditionError
from core.utils.logger import Logger
from core.utils.settings import load_constants


class StableInstance(Instance):
    """
    Open-loop stable instance indexed by (g, i, omega).

    Attributes:
        g: Regression target on R^k
        i: Which member of the challenging pair drives the linear block
        omega: Sign of the second-order correction on the patch
        mu, tau, delta: Construction parameters
        d: State dimension k + 2
    """

    kind = "stable"

    def __init__(self, g: RegressionTarget, i: int = 1, omega: int = 1, mu: float = 0.25,
                 tau: float = 0.1, delta: float = 0.01, c_cost: Optional[float] = None,
                 c_delta: Optional[float] = None, level_max: Optional[int] = None):
        if i not in (1, 2):
            raise PreconditionError(f"i must be 1 or 2, got {i}")
        if omega not in (-1, 1):
            raise PreconditionError(f"omega must be -1 or +1, got {omega}")
        if not (0.0 < tau < 1.0) or not (0.0 < delta < 1.0):
            raise PreconditionError(f"tau and delta must lie in (0, 1), got {tau}, {delta}")

        constants = load_constants()
        self.g = g
        self.k = int(g.k)
        self.d = self.k + 2
        self.i = i
        self.omega = omega
        self.mu = mu
        self.tau = tau
        self.delta = delta
        self.c_cost = constants.c_cost if c_cost is None else c_cost
        self.c_delta = constants.c_delta if c_delta is None else c_delta
        self.level_max = constants.level_max if level_max is None else level_max

        self.pair = challenging_pair(mu)
        self.Abar = embed_top_left(self.pair.A(i), self.d)
        self.Kbar = embed_top_left(self.pair.K(i), self.d)
        self.Kbar1 = embed_top_left(self.pair.K1, self.d)
        self.Kbar2 = embed_top_left(self.pair.K2, self.d)
        self.x_offset = np.zeros(self.d)
        self.x_offset[2] = 3.0

        levels = np.arange(1, self.level_max + 1)
        weights = (6.0 / np.pi**2) / levels.astype(float) ** 2
        # leftover tail mass goes to the last level
        weights[-1] = 1.0 - np.sum(weights[:-1])
        self.level_probs = weights

        self.logger = Logger("StableInstance").logger
        self.logger.debug(f"Built stable instance i={i} omega={omega} mu={mu} d={self.d}")

    # patch helpers

    def restrict(self, x: np.ndarray) -> float:
        """bump(x - x_offset): 1 on the regression patch, 0 away from it."""
        return bump_radial(np.linalg.norm(x - self.x_offset))

    def patch_input(self, x: np.ndarray) -> np.ndarray:
        """Proj_{>=3}(x - x_offset), the regression input carried by the state."""
        return x[2:] - self.x_offset[2:]

    def T(self, x: np.ndarray) -> float:
        return float(self.g(self.patch_input(x)))

    # dynamics

    def expert_action(self, x: np.ndarray, t: int = 1) -> np.ndarray:
        u = self.Kbar @ x
        r = self.restrict(x)
        if r > 0.0:
            u[0] = u[0] + (self.tau * r) * self.T(x)
        return u

    def step(self, x: np.ndarray, u: np.ndarray, t: int = 1) -> np.ndarray:
        nxt = self.Abar @ x + u
        r = self.restrict(x)
        if r > 0.0:
            tau_r = self.tau * r
            Tg = self.T(x)
            gate_u = bump_radial(np.linalg.norm(u))
            nxt[0] = nxt[0] - tau_r * Tg + self.omega * tau_r * (self.tau * Tg - u[0] * gate_u)
        return nxt

    def sample_init(self, rng: np.random.Generator) -> InitState:
        if rng.random() < 0.5:
            z = sample_unit_ball(self.k, 1, rng)[0]
            x1 = self.x_offset.copy()
            x1[2:] += z
            return InitState(x1=x1, branch="Z0", z=z)

        w = sample_unit_ball(self.d - 1, 1, rng)[0]
        if rng.random() < 0.5:
            level = 0
        else:
            level = int(rng.choice(np.arange(1, self.level_max + 1), p=self.level_probs))
        x1 = np.zeros(self.d)
        x1[1:] = self.delta * 2.0 ** (-level) * w
        return InitState(x1=x1, branch="Z1", y_level=level)

    def cost(self, x: np.ndarray, u: np.ndarray, t: int = 1) -> float:
        """
        Sum of five gated terms: e1 excursion, gain mismatch near the origin,
        leaving the Delta-ball off the patch, large inputs, and off-e1 inputs on
        the patch.
        """
        c = self.c_cost
        on_patch = self.restrict(x)
        near_origin = bump_radial(np.linalg.norm(x))

        total = c * abs(x[0])
        if near_origin > 0.0:
            mismatch = np.linalg.norm(u - self.Kbar1 @ x) + np.linalg.norm(u - self.Kbar2 @ x)
            total += c * mismatch * near_origin
        if on_patch < 1.0:
            inside = bump_radial(np.linalg.norm(x) / (self.c_delta * self.delta))
            total += c * self.delta * (1.0 - on_patch) * (1.0 - inside)
        total += self.tau * c * (1.0 - bump_radial(np.linalg.norm(u) / self.tau))
        if on_patch > 0.0:
            total += c * on_patch * np.linalg.norm(u[1:])
        return float(total)

    def with_index(self, i: int, omega: Optional[int] = None) -> 'StableInstance':
        """Sibling instance sharing g and every parameter except (i, omega)."""
        return StableInstance(self.g, i=i, omega=self.omega if omega is None else omega, mu=self.mu,
                              tau=self.tau, delta=self.delta, c_cost=self.c_cost,
                              c_delta=self.c_delta, level_max=self.level_max)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'g': self.g.to_dict(),
            'i': self.i,
            'omega': self.omega,
            'mu': self.mu,
            'tau': self.tau,
            'delta': self.delta,
            'c_cost': self.c_cost,
            'c_delta': self.c_delta,
            'level_max': self.level_max,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'StableInstance':
        return cls(target_from_dict(data['g']), i=int(data['i']), omega=int(data['omega']),
                   mu=float(data['mu']), tau=float(data['tau']), delta=float(data['delta']),
                   c_cost=float(data['c_cost']), c_delta=float(data['c_delta']),
                   level_max=int(data['level_max']))


def make_stable_instance(g: RegressionTarget, i: int = 1, omega: int = 1, mu: float = 0.25,
                         tau: float = 0.1, delta: float = 0.01, k: Optional[int] = None) -> StableInstance:
    """
    Build a stable instance.

    Args:
        g: Regression target
        i, omega: Instance index
        mu, tau, delta: Construction parameters
        k: Expected input dimension of g, checked when given

    Raises:
        PreconditionError: On a dimension mismatch or out-of-range parameters
    """
    if k is not None and int(g.k) != k:
        raise PreconditionError(f"g has input dimension {g.k}, expected {k}")
    return StableInstance(g, i=i, omega=omega, mu=mu, tau=tau, delta=delta)
