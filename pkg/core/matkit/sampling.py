"""
Random matrices, uniform ball samples and greedy packings.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List

import numpy as np
from scipy.linalg import qr
from scipy.spatial import cKDTree

from core.utils.errors import DegeneratePackingError, PreconditionError
from core.utils.settings import load_constants


def random_orthogonal(d: int, rng: np.random.Generator) -> np.ndarray:
    """
    Sample a Haar-distributed orthogonal matrix.

    Args:
        d: Dimension, d >= 1
        rng: Source of randomness

    Returns:
        np.ndarray: Orthogonal (d, d) matrix
    """
    if d < 1:
        raise PreconditionError(f"d must be >= 1, got {d}")
    gaussian = rng.standard_normal((d, d))
    q, r = qr(gaussian)
    # sign-normalize so the factorization is unique
    signs = np.sign(np.diag(r))
    signs[signs == 0] = 1.0
    return q * signs


def sample_unit_ball(k: int, n: int, rng: np.random.Generator, radius: float = 1.0) -> np.ndarray:
    """Uniform samples from the radius-``radius`` ball of R^k, shape (n, k)."""
    directions = rng.standard_normal((n, k))
    norms = np.linalg.norm(directions, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    radii = radius * rng.random((n, 1)) ** (1.0 / k)
    return directions / norms * radii


@dataclass
class Packing:
    """
    Centers with pairwise distances at least ``separation`` inside a ball.

    Attributes:
        centers: (n, d) array of centers
        separation: Minimum pairwise distance
        domain_radius: Radius of the ball all centers lie in
        attempts: Number of rejection-sampling proposals used
    """
    centers: np.ndarray
    separation: float
    domain_radius: float
    attempts: int = 0
    errors: List[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return int(self.centers.shape[0])

    def is_valid(self) -> bool:
        """Re-check separation and containment."""
        if self.size == 0:
            return True
        if np.any(np.linalg.norm(self.centers, axis=1) > self.domain_radius + 1e-12):
            return False
        if self.size < 2:
            return True
        pairs = cKDTree(self.centers).query_pairs(self.separation * (1.0 - 1e-12))
        return len(pairs) == 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'dim': int(self.centers.shape[1]),
            'centers': self.centers.tolist(),
            'separation': self.separation,
            'domain_radius': self.domain_radius,
            'attempts': self.attempts,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Packing':
        centers = np.asarray(data['centers'], dtype=float).reshape(-1, int(data['dim']))
        return cls(
            centers=centers,
            separation=float(data['separation']),
            domain_radius=float(data['domain_radius']),
            attempts=int(data.get('attempts', 0)),
        )


def greedy_packing(d: int, sep: float, domain_radius: float, max_n: int,
                   rng: np.random.Generator, min_points: int = 2,
                   batch_size: int = 4096) -> Packing:
    """
    Rejection-sampled packing of the radius-``domain_radius`` ball of R^d.

    Proposals are drawn uniformly in the ball and accepted in proposal order
    when they keep distance ``sep`` from every accepted center. The attempt
    budget is ``packing_budget_factor * max_n`` proposals; batches are only a
    vectorization device and do not change the result.

    Args:
        d: Ambient dimension
        sep: Minimum pairwise distance, > 0
        domain_radius: Radius of the domain ball
        max_n: Stop after this many centers
        rng: Source of randomness
        min_points: Fewer accepted centers raises DegeneratePackingError

    Returns:
        Packing: The accepted centers

    Raises:
        PreconditionError: If sep <= 0 or max_n < 1
        DegeneratePackingError: If fewer than ``min_points`` centers fit
    """
    if sep <= 0:
        raise PreconditionError(f"sep must be positive, got {sep}")
    if max_n < 1:
        raise PreconditionError(f"max_n must be >= 1, got {max_n}")

    budget = load_constants().packing_budget_factor * max_n
    accepted = np.zeros((0, d))
    used = 0
    while used < budget and accepted.shape[0] < max_n:
        m = min(batch_size, budget - used)
        proposals = sample_unit_ball(d, m, rng, radius=domain_radius)
        used += m

        if accepted.shape[0] > 0:
            dist, _ = cKDTree(accepted).query(proposals, k=1)
            proposals = proposals[dist >= sep]
        if proposals.shape[0] == 0:
            continue

        # resolve conflicts inside the batch in proposal order
        conflicts: Dict[int, List[int]] = {}
        for a, b in cKDTree(proposals).query_pairs(sep * (1.0 - 1e-12)):
            conflicts.setdefault(a, []).append(b)
            conflicts.setdefault(b, []).append(a)
        kept: List[int] = []
        kept_set = set()
        room = max_n - accepted.shape[0]
        for idx in range(proposals.shape[0]):
            if len(kept) >= room:
                break
            if any(j in kept_set for j in conflicts.get(idx, ())):
                continue
            kept.append(idx)
            kept_set.add(idx)
        accepted = np.vstack([accepted, proposals[kept]])

    packing = Packing(centers=accepted, separation=sep, domain_radius=domain_radius, attempts=used)
    if packing.size < min_points:
        raise DegeneratePackingError(
            f"Packing placed {packing.size} centers, need at least {min_points} "
            f"(d={d}, sep={sep}, radius={domain_radius})"
        )
    return packing
