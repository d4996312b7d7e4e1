"""
Empirical anti-concentration of a policy's action differences.
"""

from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from core.policies.base import History, Policy
from core.utils.rng import derive_rng, draw_seed

COUPLINGS = ("shared_noise", "independent")
ALPHA_GRID = (1.0, 1.0 / np.sqrt(2.0), 0.5, 0.25)
P_THRESHOLD = 1.0 / 12.0


@dataclass
class AntiConcentrationEstimate:
    """
    Attributes:
        alpha_hat: Largest grid alpha whose probability clears the threshold (0 if none)
        p_hat: Probability at alpha_hat
        frontier: alpha -> worst-direction probability
        stderr: Binomial standard error of p_hat
        trials: Coupled action pairs drawn
    """
    alpha_hat: float
    p_hat: float
    frontier: Dict[float, float] = field(default_factory=dict)
    stderr: float = 0.0
    trials: int = 0


def anti_concentration_estimate(policy: Policy, coupling: str, x, x_prime, trials: int,
                                rng: np.random.Generator, n_directions: int = 8,
                                alpha_grid: Sequence[float] = ALPHA_GRID,
                                threshold: float = P_THRESHOLD, t: int = 1) -> AntiConcentrationEstimate:
    """
    Estimate Pr[|<v, u - u'> - mean| >= alpha * std] over random unit directions v.

    Under 'shared_noise' both actions are drawn with the same seed; under
    'independent' with different seeds. The probability reported for each
    alpha is the worst over directions. A direction with zero variance counts
    as probability 1, so deterministic policies come out as (1, 1).

    Args:
        policy: Policy under test
        coupling: 'shared_noise' or 'independent'
        x, x_prime: The two states
        trials: Coupled draws, >= 2
        rng: Source of randomness
        n_directions: Random directions tested
        alpha_grid: Candidate alphas, tried from largest down
        threshold: Probability an alpha must reach to be reported

    Returns:
        AntiConcentrationEstimate: The (alpha, p) frontier
    """
    if coupling not in COUPLINGS:
        raise ValueError(f"Unknown coupling '{coupling}', expected one of {COUPLINGS}")
    if trials < 2:
        raise ValueError(f"trials must be >= 2, got {trials}")

    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_prime = np.atleast_1d(np.asarray(x_prime, dtype=float))
    base = draw_seed(rng)
    diffs = np.zeros((trials, x.shape[0]))
    for j in range(trials):
        rng_a = derive_rng(base, j)
        rng_b = derive_rng(base, j) if coupling == "shared_noise" else derive_rng(base, j, 1)
        u = np.atleast_1d(policy.clone().act(History(states=[x]), t, rng_a))
        u_prime = np.atleast_1d(policy.clone().act(History(states=[x_prime]), t, rng_b))
        diffs[j] = u - u_prime

    directions = rng.standard_normal((n_directions, x.shape[0]))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    proj = diffs @ directions.T

    frontier: Dict[float, float] = {}
    for alpha in sorted(alpha_grid, reverse=True):
        worst = 1.0
        for k in range(n_directions):
            column = proj[:, k]
            mean, std = float(column.mean()), float(column.std())
            if std <= 1e-12 * (1.0 + abs(mean)):
                continue
            worst = min(worst, float(np.mean(np.abs(column - mean) >= alpha * std)))
        frontier[float(alpha)] = worst

    for alpha, p in frontier.items():
        if p >= threshold:
            return AntiConcentrationEstimate(alpha_hat=alpha, p_hat=p, frontier=frontier,
                                             stderr=float(np.sqrt(p * (1.0 - p) / trials)), trials=trials)
    return AntiConcentrationEstimate(alpha_hat=0.0, p_hat=0.0, frontier=frontier, trials=trials)
