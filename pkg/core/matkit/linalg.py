"""
Dense linear algebra for the challenging pair and stability estimates.
"""

from dataclasses import dataclass
from typing import Any, Dict, Optional

import numpy as np
import scipy.linalg

from core.utils.errors import ConvergenceError, PreconditionError, UnstableMatrixError
from core.utils.settings import load_constants


@dataclass(frozen=True)
class ChallengingPair:
    """
    Two linear systems (A1, K1), (A2, K2) whose gains stabilize their own
    system and destabilize the other one.

    Attributes:
        mu: Pair parameter in (0, 1/2]
        c_mu: Off-diagonal coupling 1.5 * mu
        A1, A2: Open-loop dynamics
        K1, K2: Expert gains
    """
    mu: float
    c_mu: float
    A1: np.ndarray
    A2: np.ndarray
    K1: np.ndarray
    K2: np.ndarray

    def A(self, i: int) -> np.ndarray:
        return self.A1 if i == 1 else self.A2

    def K(self, i: int) -> np.ndarray:
        return self.K1 if i == 1 else self.K2

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mu': self.mu,
            'c_mu': self.c_mu,
            'A1': self.A1.tolist(),
            'A2': self.A2.tolist(),
            'K1': self.K1.tolist(),
            'K2': self.K2.tolist(),
        }


@dataclass(frozen=True)
class StabilityEstimate:
    """Geometric envelope ||A^s|| <= C * rho^s for 1 <= s <= horizon_used."""
    C: float
    rho: float
    horizon_used: int


def challenging_pair(mu: float) -> ChallengingPair:
    """
    Build the challenging pair for parameter ``mu``.

    Args:
        mu: Pair parameter, 0 < mu <= 1/2

    Returns:
        ChallengingPair: The four 2x2 matrices

    Raises:
        PreconditionError: If mu is outside (0, 1/2]
    """
    if not (0.0 < mu <= 0.5):
        raise PreconditionError(f"mu must lie in (0, 1/2], got {mu}")
    c = 1.5 * mu
    A1 = np.array([[1.0 + mu, c], [-c, 1.0 - 2.0 * mu]])
    A2 = np.array([[-(1.0 - mu / 4.0), c], [0.0, 1.0 - 2.0 * mu]])
    K1 = np.array([[-(1.0 + mu), -c], [c, 0.0]])
    K2 = np.array([[1.0 - mu / 4.0, -c], [0.0, 0.0]])
    return ChallengingPair(mu=mu, c_mu=c, A1=A1, A2=A2, K1=K1, K2=K2)


def balancing_gain(pair: ChallengingPair, a: Optional[float] = None, b: float = 0.0) -> np.ndarray:
    """
    Gain [[a, -c], [b, 0]] sharing the pair's e2 column.

    The default ``a = -5 mu / 8`` balances the two closed-loop top-left
    entries, which is the least destabilizing choice.
    """
    if a is None:
        a = -5.0 * pair.mu / 8.0
    return np.array([[a, -pair.c_mu], [b, 0.0]])


def _closed_form_2x2(A: np.ndarray) -> float:
    trace = A[0, 0] + A[1, 1]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    disc = complex(trace * trace / 4.0 - det)
    root = np.sqrt(disc)
    return float(max(abs(trace / 2.0 + root), abs(trace / 2.0 - root)))


def spectral_radius(A: np.ndarray) -> float:
    """
    Largest eigenvalue magnitude of a square matrix.

    Uses the characteristic polynomial for 2x2 inputs and scipy's dense
    eigensolver otherwise.

    Raises:
        PreconditionError: If A is not square
        ConvergenceError: If the eigensolver fails to converge
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise PreconditionError(f"Expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 1:
        return float(abs(A[0, 0]))
    if A.shape[0] == 2:
        return _closed_form_2x2(A)
    try:
        return float(np.max(np.abs(scipy.linalg.eigvals(A))))
    except np.linalg.LinAlgError as e:
        raise ConvergenceError(f"Eigenvalue iteration did not converge: {str(e)}")


def op_norm(A: np.ndarray) -> float:
    """Spectral norm via the symmetric eigenvalues of A^T A."""
    A = np.asarray(A, dtype=float)
    gram = A.T @ A
    return float(np.sqrt(max(0.0, scipy.linalg.eigvalsh(gram)[-1])))


def stability_constants(A: np.ndarray, horizon: int, margin: Optional[float] = None) -> StabilityEstimate:
    """
    Estimate (C, rho) with ||A^s|| <= C rho^s for 1 <= s <= horizon.

    Args:
        A: Square matrix with spectral radius < 1
        horizon: Number of powers checked
        margin: Added to the spectral radius; defaults to the frozen constant

    Returns:
        StabilityEstimate: C >= 1 and rho in [0, 1)

    Raises:
        UnstableMatrixError: If the spectral radius is >= 1
        PreconditionError: If horizon < 1
    """
    if horizon < 1:
        raise PreconditionError(f"horizon must be >= 1, got {horizon}")
    margin = load_constants().stability_margin if margin is None else margin
    radius = spectral_radius(A)
    if radius >= 1.0:
        raise UnstableMatrixError(f"Matrix is not stable: spectral radius {radius:.6f}")

    # clamp strictly below 1
    rho = min(radius + margin, radius + 0.5 * (1.0 - radius))
    C = 1.0
    power = np.eye(A.shape[0])
    for s in range(1, horizon + 1):
        power = power @ A
        C = max(C, op_norm(power) / rho**s)
    return StabilityEstimate(C=C, rho=rho, horizon_used=horizon)


def cross_instability(pair: ChallengingPair, Khat: np.ndarray, H: int) -> float:
    """
    max over i of ||(A_i + Khat)^H e1||.

    Args:
        pair: Challenging pair
        Khat: Candidate 2x2 gain that matches the experts on e2
        H: Power, H >= 0

    Returns:
        float: The larger of the two closed-loop growths along e1

    Raises:
        PreconditionError: If Khat e2 differs from K1 e2 by more than 1e-12
    """
    Khat = np.asarray(Khat, dtype=float)
    if H < 0:
        raise PreconditionError(f"H must be >= 0, got {H}")
    if np.max(np.abs(Khat[:, 1] - pair.K1[:, 1])) > 1e-12:
        raise PreconditionError("Khat must agree with K1 on e2")
    e1 = np.array([1.0, 0.0])
    return max(
        float(np.linalg.norm(np.linalg.matrix_power(pair.A(i) + Khat, H) @ e1))
        for i in (1, 2)
    )


def embed_top_left(block: np.ndarray, d: int) -> np.ndarray:
    """Place a 2x2 block in the top-left corner of a d x d zero matrix."""
    out = np.zeros((d, d))
    out[:2, :2] = block
    return out
