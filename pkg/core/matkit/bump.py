"""
Smooth bump functions used to gate every nonlinear term.

bump(z) equals 1 on the closed unit ball, 0 outside radius 2 and is C-infinity
in between. It is built from phi(u) = exp(1 - 1/u) and the smooth step
psi(u) = (1 - phi(1 - u)) * phi(u) on (0, 1).
"""

import math
from functools import lru_cache

import numpy as np

from core.utils.settings import load_constants


def _phi(u: np.ndarray) -> np.ndarray:
    out = np.zeros_like(u, dtype=float)
    pos = u > 0
    out[pos] = np.exp(1.0 - 1.0 / u[pos])
    return out


def smooth_step(u) -> np.ndarray:
    """psi: 0 for u <= 0, 1 for u >= 1, smooth and increasing in between."""
    u = np.asarray(u, dtype=float)
    out = np.where(u >= 1.0, 1.0, 0.0)
    mid = (u > 0.0) & (u < 1.0)
    if np.any(mid):
        um = u[mid]
        out[mid] = (1.0 - _phi(1.0 - um)) * _phi(um)
    return out


def _smooth_step_scalar(u: float) -> float:
    if u <= 0.0:
        return 0.0
    if u >= 1.0:
        return 1.0
    return (1.0 - math.exp(1.0 - 1.0 / (1.0 - u))) * math.exp(1.0 - 1.0 / u)


def bump_radial(r) -> np.ndarray:
    """Bump as a function of the radius ``r = ||z||``."""
    # argument is 1 at r = 1 and 0 at r = 2
    if np.ndim(r) == 0:
        r = float(r)
        return _smooth_step_scalar((4.0 - r * r) / 3.0)
    r = np.asarray(r, dtype=float)
    return smooth_step((4.0 - r * r) / 3.0)


def bump(z) -> np.ndarray:
    """
    Evaluate the bump on vectors stacked along the last axis.

    Args:
        z: Array of shape (..., k)

    Returns:
        Values in [0, 1] of shape (...); a float for a single vector
    """
    z = np.asarray(z, dtype=float)
    return bump_radial(np.linalg.norm(z, axis=-1))


def bump_value(z) -> float:
    """Scalar convenience wrapper around :func:`bump` for a single vector."""
    return float(bump(z))


@lru_cache(maxsize=None)
def derivative_bound(order: int) -> float:
    """
    Measured sup-norm of the ``order``-th directional derivative of the bump.

    Lines through the support are parametrized by their distance ``a`` to the
    origin; along each line the bump is h(t) = bump_radial(sqrt(a^2 + t^2)).
    The bound is the max over a probe grid of finite-difference derivatives,
    so it does not depend on the ambient dimension. A value pinned in the
    constants file takes precedence.
    """
    if order < 0:
        raise ValueError(f"Derivative order must be non-negative, got {order}")
    pinned = load_constants().bump_derivative_bounds.get(str(order))
    if pinned is not None:
        return float(pinned)
    if order == 0:
        return 1.0

    step = 1e-3
    t = np.arange(-2.2, 2.2 + step / 2, step)
    best = 0.0
    for a in np.linspace(0.0, 2.0, 41):
        h = bump_radial(np.sqrt(a * a + t * t))
        for _ in range(order):
            h = np.gradient(h, step)
        # the outermost samples carry one-sided stencils
        best = max(best, float(np.max(np.abs(h[order:-order]))))
    return best


def smoothness_constant(s: int) -> float:
    """c'_s: max of the measured derivative bounds up to order ``s``, at least 1."""
    return max(1.0, *(derivative_bound(p) for p in range(s + 1)))
