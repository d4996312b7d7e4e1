"""
One-step controllability: find u with f(x, u) = x_target.
"""

from typing import Callable, Optional

import numpy as np

from core.utils.errors import ConvergenceError
from core.utils.logger import Logger
from core.utils.settings import load_constants

logger = Logger("OneStepControl").logger

StepFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


def one_step_control(step_fn: StepFn, x: np.ndarray, x_target: np.ndarray, tol: float = 1e-10,
                     sign: int = 1, max_iter: Optional[int] = None) -> np.ndarray:
    """
    Solve step_fn(x, u) = x_target by fixed-point iteration.

    The dynamics are phi(x) + sign * u + psi(x, u) with psi contractive in u,
    so u <- u + sign * (x_target - step_fn(x, u)) converges; in the linear
    region one update is exact.

    Args:
        step_fn: Dynamics f(x, u) at a fixed time
        x: Current state
        x_target: Desired next state
        tol: Residual tolerance
        sign: Sign of the direct input term
        max_iter: Iteration cap, defaults to the frozen constant

    Returns:
        np.ndarray: An input reaching x_target within tol

    Raises:
        ConvergenceError: If the residual is still above tol after max_iter updates
    """
    constants = load_constants()
    max_iter = constants.control_max_iter if max_iter is None else max_iter
    x = np.asarray(x, dtype=float)
    x_target = np.asarray(x_target, dtype=float)

    u = np.zeros_like(x_target)
    residual = x_target - step_fn(x, u)
    for iteration in range(1, max_iter + 1):
        u = u + sign * residual
        residual = x_target - step_fn(x, u)
        error = float(np.linalg.norm(residual))
        if error <= tol:
            bound = constants.control_gain_bound * (1.0 + np.linalg.norm(x) + np.linalg.norm(x_target))
            if np.linalg.norm(u) > bound:
                logger.warning(f"Control input norm {np.linalg.norm(u):.3e} exceeds gain bound {bound:.3e}")
            logger.debug(f"One-step control converged in {iteration} iterations (residual {error:.2e})")
            return u

    logger.error(f"One-step control did not converge: residual {error:.3e} after {max_iter} iterations")
    raise ConvergenceError(f"One-step control did not converge within {max_iter} iterations (residual {error:.3e})")
