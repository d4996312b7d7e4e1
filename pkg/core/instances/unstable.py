"""
Open-loop unstable constructions driven by unknown rotations.

The closed loop under the expert is f(x, u) = u - pi(x), so any input error
is passed on through an unknown orthogonal matrix scaled by rho. The
time-varying variant draws a fresh rotation O_t per step; the time-invariant
variant places one rotation per patch around packing centers y_i and walks
the expert along the centers.
"""

from functools import lru_cache
from typing import Any, Dict, Optional

import numpy as np

from core.funclass.hard_function import RegressionTarget, target_from_dict
from core.instances.base import Instance
from core.matkit.bump import bump_radial
from core.matkit.sampling import Packing, greedy_packing, random_orthogonal, sample_unit_ball
from core.models.trajectory import InitState
from core.utils.errors import PreconditionError
from core.utils.logger import Logger
from core.utils.rng import derive_rng
from core.utils.settings import load_constants

VARIANTS = ("time_varying", "time_invariant")


@lru_cache(maxsize=4096)
def _rotation(seed: int, d: int, key: int) -> np.ndarray:
    matrix = random_orthogonal(d, derive_rng(seed, key))
    matrix.setflags(write=False)
    return matrix


class UnstableInstance(Instance):
    """
    Rotation-based instance with expansion factor rho > 1.

    Attributes:
        g: Regression target on R^k
        rho: Expansion factor
        d, k: State and regression dimensions, k <= d
        variant: 'time_varying' or 'time_invariant'
        rotation_seed: Seed of the rotation stream
        packing: Patch centers (time-invariant only)
        r0: Patch radius (time-invariant only)
    """

    kind = "unstable"

    def __init__(self, g: RegressionTarget, rho: float, d: int, variant: str = "time_varying",
                 rotation_seed: int = 0, packing: Optional[Packing] = None, r0: float = 0.1,
                 cost_scale: Optional[float] = None):
        if rho <= 1.0:
            raise PreconditionError(f"rho must exceed 1, got {rho}")
        if int(g.k) > d:
            raise PreconditionError(f"k={g.k} exceeds d={d}")
        if variant not in VARIANTS:
            raise PreconditionError(f"Unknown variant '{variant}', expected one of {VARIANTS}")
        if variant == "time_invariant" and packing is None:
            raise PreconditionError("The time-invariant variant needs a packing")

        self.g = g
        self.k = int(g.k)
        self.d = d
        self.rho = rho
        self.variant = variant
        self.rotation_seed = int(rotation_seed)
        self.packing = packing
        self.r0 = r0
        self.cost_scale = load_constants().tiv_cost_scale if cost_scale is None else cost_scale
        self.logger = Logger("UnstableInstance").logger
        self.logger.debug(f"Built {variant} unstable instance rho={rho} d={d} k={self.k}")

    def rotation(self, key: int) -> np.ndarray:
        """O_t for the time-varying variant, O_i for patch i otherwise."""
        return _rotation(self.rotation_seed, self.d, int(key))

    # time-invariant helpers

    def _active_patch(self, x: np.ndarray):
        """(index, psi) of the patch whose support contains x, or (None, 0)."""
        centers = self.packing.centers
        dist = np.linalg.norm(centers - x, axis=1)
        idx = int(np.argmin(dist))
        if dist[idx] >= 2.0 * self.r0:
            return None, 0.0
        return idx, bump_radial(dist[idx] / self.r0)

    def _next_center(self, idx: int) -> np.ndarray:
        last = self.packing.size - 1
        return self.packing.centers[min(idx + 1, last)]

    def _pi(self, x: np.ndarray, t: int) -> np.ndarray:
        if self.variant == "time_varying":
            if t == 1:
                out = np.zeros(self.d)
                out[0] = float(self.g(x[:self.k]))
                return out
            return -self.rho * (self.rotation(t) @ x)

        idx, psi = self._active_patch(x)
        out = np.zeros(self.d)
        if idx is None:
            return out
        offset = x - self.packing.centers[idx]
        if idx == 0:
            out[0] = psi * float(self.g(offset[:self.k] / self.r0))
            return out
        return -self.rho * psi * (self.rotation(idx + 1) @ offset)

    def expert_action(self, x: np.ndarray, t: int = 1) -> np.ndarray:
        return self._pi(x, t)

    def step(self, x: np.ndarray, u: np.ndarray, t: int = 1) -> np.ndarray:
        nxt = u - self._pi(x, t)
        if self.variant == "time_invariant":
            idx, psi = self._active_patch(x)
            if idx is not None:
                nxt = nxt + psi * self._next_center(idx)
        return nxt

    def sample_init(self, rng: np.random.Generator) -> InitState:
        z = sample_unit_ball(self.k, 1, rng)[0]
        x1 = np.zeros(self.d)
        if self.variant == "time_varying":
            x1[:self.k] = z
        else:
            x1 = self.packing.centers[0].copy()
            x1[:self.k] += self.r0 * z
        return InitState(x1=x1, branch="Z0", z=z)

    def cost(self, x: np.ndarray, u: np.ndarray, t: int = 1) -> float:
        """
        Time-varying: ||x|| from t = 2 on. Time-invariant: scaled distance to
        the active patch center, counted on every patch but the first.
        """
        if self.variant == "time_varying":
            return 0.0 if t < 2 else float(np.linalg.norm(x))
        idx, psi = self._active_patch(x)
        if idx is None or idx == 0:
            return 0.0
        return float(self.cost_scale * psi * np.linalg.norm(x - self.packing.centers[idx]))

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'g': self.g.to_dict(),
            'rho': self.rho,
            'd': self.d,
            'variant': self.variant,
            'rotation_seed': self.rotation_seed,
            'packing': None if self.packing is None else self.packing.to_dict(),
            'r0': self.r0,
            'cost_scale': self.cost_scale,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'UnstableInstance':
        packing = data.get('packing')
        return cls(target_from_dict(data['g']), rho=float(data['rho']), d=int(data['d']),
                   variant=data['variant'], rotation_seed=int(data['rotation_seed']),
                   packing=None if packing is None else Packing.from_dict(packing),
                   r0=float(data['r0']), cost_scale=float(data['cost_scale']))


def make_unstable_instance(g: RegressionTarget, rho: float, d: int, k: Optional[int] = None,
                           variant: str = "time_varying", rotation_seed: int = 0,
                           packing_seed: int = 0, r0: float = 0.1,
                           n_centers: int = 64) -> UnstableInstance:
    """
    Build an unstable instance.

    Args:
        g: Regression target on R^k
        rho: Expansion factor, > 1
        d: State dimension
        k: Expected input dimension of g, checked when given
        variant: 'time_varying' or 'time_invariant'
        rotation_seed: Seed of the rotation stream
        packing_seed: Seed of the patch-center packing (time-invariant only)
        r0: Patch radius; centers are 6*r0 apart so the 3*r0-balls are disjoint
        n_centers: Maximum number of patch centers

    Returns:
        UnstableInstance: The instance

    Raises:
        PreconditionError: On bad parameters
        DegeneratePackingError: If fewer than two patch centers fit
    """
    if k is not None and int(g.k) != k:
        raise PreconditionError(f"g has input dimension {g.k}, expected {k}")
    packing = None
    if variant == "time_invariant":
        packing = greedy_packing(d, 6.0 * r0, 1.0, n_centers, derive_rng(packing_seed, d))
    return UnstableInstance(g, rho=rho, d=d, variant=variant, rotation_seed=rotation_seed,
                            packing=packing, r0=r0)
