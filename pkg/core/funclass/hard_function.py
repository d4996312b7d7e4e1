"""
Regression targets embedded in the hard instances.

SmoothFunction is the bump-packing class: disjoint scaled bumps with random
signs whose amplitude shrinks like eps^s, so every derivative up to order s
stays bounded by 1. MLPFunction is a random tanh network used as a smooth
but unstructured alternative.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Union

import numpy as np
from scipy.spatial import cKDTree

from core.matkit.bump import bump_radial, smoothness_constant
from core.matkit.sampling import greedy_packing
from core.nets.tiny_net import TinyNet
from core.utils.errors import PreconditionError


def amplitude_for(eps: float, s: int) -> float:
    """Bump amplitude eps^s / (2^s c'_s); keeps derivatives of order <= s below 1."""
    return eps**s / (2.0**s * smoothness_constant(s))


@dataclass
class SmoothFunction:
    """
    g(z) = sum_i sign_i * amplitude * bump(2 (z - c_i) / eps).

    Centers are 2*eps separated, so the eps-radius supports are disjoint and
    at most one term is non-zero at any z.

    Attributes:
        k: Input dimension
        s: Smoothness order
        eps: Bandwidth
        centers: (n, k) bump centers inside the unit ball
        signs: +-1 per center
        amplitude: eps^s / (2^s c'_s)
    """
    k: int
    s: int
    eps: float
    centers: np.ndarray
    signs: np.ndarray
    amplitude: float
    _tree: Any = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1, self.k)
        self.signs = np.asarray(self.signs, dtype=float).reshape(-1)
        if self.centers.shape[0] != self.signs.shape[0]:
            raise ValueError("SmoothFunction needs one sign per center")
        if self.centers.shape[0] > 0:
            self._tree = cKDTree(self.centers)

    def __call__(self, z) -> Union[float, np.ndarray]:
        return eval_g(self, z)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': 'bump_packing',
            'k': self.k,
            's': self.s,
            'eps': self.eps,
            'centers': self.centers.tolist(),
            'signs': self.signs.tolist(),
            'amplitude': self.amplitude,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SmoothFunction':
        return cls(
            k=int(data['k']),
            s=int(data['s']),
            eps=float(data['eps']),
            centers=np.asarray(data['centers'], dtype=float),
            signs=np.asarray(data['signs'], dtype=float),
            amplitude=float(data['amplitude']),
        )


def eval_g(g: SmoothFunction, z) -> Union[float, np.ndarray]:
    """
    Evaluate a bump-packing function.

    Args:
        g: The function
        z: One point of shape (k,) or a batch of shape (m, k)

    Returns:
        float for a single point, otherwise an (m,) array
    """
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    points = z.reshape(-1, g.k)
    values = np.zeros(points.shape[0])
    if g._tree is not None:
        dist, idx = g._tree.query(points, k=1)
        near = dist < g.eps
        if np.any(near):
            values[near] = g.signs[idx[near]] * g.amplitude * bump_radial(2.0 * dist[near] / g.eps)
    return float(values[0]) if single else values


def sample_hard_function(k: int, s: int, eps: float, rng: np.random.Generator,
                         max_centers: int = 20000) -> SmoothFunction:
    """
    Draw a bump-packing function over a greedy 2*eps packing of the unit ball.

    Args:
        k: Input dimension
        s: Smoothness order, >= 1
        eps: Bandwidth in (0, 1]
        rng: Source of randomness
        max_centers: Cap on the number of bumps

    Returns:
        SmoothFunction: Function with i.i.d. uniform signs

    Raises:
        PreconditionError: If eps or s is out of range
    """
    if not (0.0 < eps <= 1.0):
        raise PreconditionError(f"eps must lie in (0, 1], got {eps}")
    if s < 1:
        raise PreconditionError(f"s must be >= 1, got {s}")
    sep = 2.0 * eps
    # packing number bound of the unit ball at this separation
    cap = int(min(max_centers, np.ceil((1.0 + 2.0 / sep) ** k)))
    packing = greedy_packing(k, sep, 1.0, max(cap, 1), rng, min_points=1)
    signs = rng.choice(np.array([-1.0, 1.0]), size=packing.size)
    return SmoothFunction(k=k, s=s, eps=eps, centers=packing.centers, signs=signs,
                          amplitude=amplitude_for(eps, s))


def zero_function(k: int, s: int = 1, eps: float = 1.0) -> SmoothFunction:
    """The constant zero target (a packing with no centers)."""
    return SmoothFunction(k=k, s=s, eps=eps, centers=np.zeros((0, k)), signs=np.zeros(0),
                          amplitude=amplitude_for(eps, s))


@dataclass
class MLPFunction:
    """Random tanh network squashed into [-1, 1]: g(z) = tanh(net(z))."""
    k: int
    net: TinyNet

    def __call__(self, z) -> Union[float, np.ndarray]:
        z = np.asarray(z, dtype=float)
        single = z.ndim == 1
        values = np.tanh(self.net.forward(z.reshape(-1, self.k))[:, 0])
        return float(values[0]) if single else values

    def to_dict(self) -> Dict[str, Any]:
        return {'kind': 'mlp', 'k': self.k, 'net': self.net.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MLPFunction':
        return cls(k=int(data['k']), net=TinyNet.from_dict(data['net']))


def sample_mlp_function(k: int, rng: np.random.Generator, hidden: int = 16, layers: int = 3) -> MLPFunction:
    """Random target with ``layers`` linear maps of width ``hidden`` and tanh activations."""
    sizes: List[int] = [k] + [hidden] * (layers - 1) + [1]
    return MLPFunction(k=k, net=TinyNet.initialize(sizes, rng, scheme="truncated_normal"))


RegressionTarget = Union[SmoothFunction, MLPFunction]


def target_from_dict(data: Dict[str, Any]) -> RegressionTarget:
    kind = data.get('kind', 'bump_packing')
    if kind == 'bump_packing':
        return SmoothFunction.from_dict(data)
    if kind == 'mlp':
        return MLPFunction.from_dict(data)
    raise ValueError(f"Unknown regression target kind '{kind}'")
