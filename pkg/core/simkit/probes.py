"""
Verification probes: incremental stability, coupled compounding curves and
the rotated-growth Monte Carlo.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from scipy.stats import binomtest

from core.instances.base import Instance
from core.matkit.sampling import random_orthogonal, sample_unit_ball
from core.models.trajectory import InitState
from core.policies.base import History, Policy
from core.simkit.rollout import rollout
from core.utils.errors import PreconditionError
from core.utils.logger import Logger
from core.utils.rng import derive_rng, draw_seed
from core.utils.settings import load_constants

StepFn = Callable[[np.ndarray, np.ndarray, int], np.ndarray]
InitSampler = Callable[[np.random.Generator], np.ndarray]

logger = Logger("Probes").logger


@dataclass
class EIISSReport:
    """
    Worst observed ratio of incremental gap to the E-IISS envelope.

    Attributes:
        C: Envelope constant checked
        rho: Envelope rate checked
        max_ratio: max over trials and t of LHS / RHS
        max_violation: max over trials and t of LHS - RHS
        passed: max_ratio <= 1 + tolerance
        trials: Number of paired simulations
    """
    C: float
    rho: float
    max_ratio: float
    max_violation: float
    passed: bool
    trials: int

    def to_dict(self) -> Dict[str, Any]:
        return {'C': self.C, 'rho': self.rho, 'max_ratio': self.max_ratio,
                'max_violation': self.max_violation, 'pass': self.passed, 'trials': self.trials}


def open_loop_step(inst: Instance) -> StepFn:
    return lambda x, u, t: inst.step(x, u, t)


def closed_loop_step(inst: Instance) -> StepFn:
    """Dynamics under the expert with ``u`` added on top of the expert input."""
    return lambda x, u, t: inst.step(x, inst.expert_action(x, t) + u, t)


def _incremental_ratios(system_step: StepFn, C: float, rho: float, H: int, x1: np.ndarray,
                        x1_prime: np.ndarray, inputs: np.ndarray, inputs_prime: np.ndarray):
    """Yield (lhs, rhs) for x_{t+1} against the envelope, t = 1..H-1."""
    x, xp = x1, x1_prime
    gap0 = float(np.linalg.norm(x1 - x1_prime))
    input_gaps = np.linalg.norm(inputs - inputs_prime, axis=1)
    for t in range(1, H):
        x = np.asarray(system_step(x, inputs[t - 1], t), dtype=float)
        xp = np.asarray(system_step(xp, inputs_prime[t - 1], t), dtype=float)
        lhs = float(np.linalg.norm(x - xp))
        powers = rho ** np.arange(t - 1, -1, -1, dtype=float)
        rhs = C * (rho**t) * gap0 + C * float(np.sum(powers * input_gaps[:t]))
        yield lhs, rhs


def _paired_draw(d: int, H: int, rng: np.random.Generator, sample_x1: Optional[InitSampler]):
    constants = load_constants()
    x1 = sample_x1(rng) if sample_x1 is not None else sample_unit_ball(d, 1, rng)[0]
    x1 = np.asarray(x1, dtype=float)
    x1_prime = x1 + sample_unit_ball(d, 1, rng, radius=constants.eiiss_initial_gap)[0]
    inputs = sample_unit_ball(d, H, rng, radius=constants.eiiss_input_scale)
    inputs_prime = inputs + sample_unit_ball(d, H, rng, radius=constants.eiiss_input_gap)
    return x1, x1_prime, inputs, inputs_prime


def eiiss_check(system_step: StepFn, C: float, rho: float, H: int, trials: int, rng: np.random.Generator,
                d: int = 1, sample_x1: Optional[InitSampler] = None) -> EIISSReport:
    """
    Test ||x_{t+1} - x'_{t+1}|| <= C rho^t ||x_1 - x'_1|| + sum_k C rho^(t-k) ||u_k - u'_k||.

    Paired initial states differ by at most the configured initial gap and
    the paired input streams by at most the configured input gap per step.

    Args:
        system_step: f(x, u, t)
        C: Envelope constant, >= 0
        rho: Envelope rate, >= 0
        H: Number of states per simulation, >= 2
        trials: Number of paired simulations, >= 1
        rng: Source of randomness
        d: State dimension
        sample_x1: Optional sampler for the base initial state (unit ball by default)

    Returns:
        EIISSReport: Worst ratio and violation over all trials and times
    """
    if trials < 1:
        raise PreconditionError(f"trials must be >= 1, got {trials}")
    if H < 2:
        raise PreconditionError(f"H must be >= 2, got {H}")
    if C < 0 or rho < 0:
        raise PreconditionError(f"C and rho must be nonnegative, got C={C}, rho={rho}")

    max_ratio, max_violation = 0.0, -np.inf
    for _ in range(trials):
        draws = _paired_draw(d, H, rng, sample_x1)
        for lhs, rhs in _incremental_ratios(system_step, C, rho, H, *draws):
            max_violation = max(max_violation, lhs - rhs)
            if rhs > 0:
                max_ratio = max(max_ratio, lhs / rhs)
            elif lhs > 0:
                max_ratio = np.inf

    passed = bool(max_ratio <= 1.0 + load_constants().eiiss_tolerance)
    if not passed:
        logger.warning(f"E-IISS envelope (C={C:.4g}, rho={rho:.4g}) violated: ratio {max_ratio:.4g}")
    return EIISSReport(C=float(C), rho=float(rho), max_ratio=float(max_ratio),
                       max_violation=float(max_violation), passed=passed, trials=trials)


def calibrate_eiiss(system_step: StepFn, rho: float, H: int, trials: int, rng: np.random.Generator,
                    d: int = 1, sample_x1: Optional[InitSampler] = None, safety: Optional[float] = None) -> float:
    """
    Smallest C that makes the envelope hold on the calibration draws, times a safety factor.

    The envelope is linear in C, so the smallest working C is the worst
    ratio observed with C = 1.
    """
    safety = load_constants().eiiss_safety if safety is None else safety
    report = eiiss_check(system_step, 1.0, rho, H, trials, rng, d=d, sample_x1=sample_x1)
    if not np.isfinite(report.max_ratio):
        raise PreconditionError(f"No finite C works for rho={rho}")
    C = max(1.0, report.max_ratio) * safety
    logger.info(f"Calibrated E-IISS constant C={C:.4g} for rho={rho:.4g} over {trials} trials")
    return C


@dataclass
class CompoundingCurve:
    """
    Normalized e1 divergence of two coupled rollouts.

    Attributes:
        curve: max_{s<=t} |<e1, x_s - x~_s>| / delta_e1 for the completed steps
        status: 'ok' or 'blowup'
        blowup_t: First time either rollout left the guard ball
    """
    curve: np.ndarray
    status: str = "ok"
    blowup_t: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'curve': self.curve.tolist(), 'status': self.status, 'blowup_t': self.blowup_t}


def compounding_probe(policy: Policy, inst: Instance, H: int, delta_e1: float, rng: np.random.Generator,
                      init: Optional[InitState] = None) -> CompoundingCurve:
    """
    Run the policy from x_1 and from x_1 + delta_e1 * e1 with shared policy noise.

    Args:
        policy: Policy to probe
        inst: Instance providing dynamics
        H: Horizon
        delta_e1: Size of the e1 perturbation; 0 gives the zero curve
        rng: Source of randomness
        init: Initial state; drawn from the instance when omitted

    Returns:
        CompoundingCurve: Truncated at the first blow-up of either rollout
    """
    if H < 1:
        raise PreconditionError(f"H must be >= 1, got {H}")
    if delta_e1 == 0:
        return CompoundingCurve(curve=np.zeros(H))

    base = draw_seed(rng)
    init = inst.sample_init(derive_rng(base, 0)) if init is None else init
    shifted = np.array(init.x1, dtype=float)
    shifted[0] += delta_e1
    perturbed = InitState(x1=shifted, branch=init.branch, y_level=init.y_level, z=init.z)

    a = rollout(policy, inst, init, H, derive_rng(base, 1))
    b = rollout(policy, inst, perturbed, H, derive_rng(base, 1))
    steps = min(a.H, b.H)
    gaps = np.abs(a.states[:steps, 0] - b.states[:steps, 0]) / abs(delta_e1)
    curve = np.maximum.accumulate(gaps)

    blowups = [traj.blowup_t for traj in (a, b) if traj.status == "blowup"]
    if blowups:
        logger.warning(f"Compounding probe blew up at t={min(blowups)}")
        return CompoundingCurve(curve=curve, status="blowup", blowup_t=min(blowups))
    return CompoundingCurve(curve=curve)


class RotationController(ABC):
    """
    Causal controller for x_{t+1} = rho O_t x_t + u_t, vectorized over runs.

    ``history`` holds arrays of shape (runs, d).
    """

    name = "controller"

    @abstractmethod
    def __call__(self, history: History, t: int, rho: float) -> np.ndarray:
        pass


class ZeroController(RotationController):
    name = "zero"

    def __call__(self, history: History, t: int, rho: float) -> np.ndarray:
        return np.zeros_like(history.current)


class GreedyCancelController(RotationController):
    """
    u_t = -rho R_t x_t where R_t is the Householder reflection mapping the
    direction of x_{t-1} onto that of O_{t-1} x_{t-1} = (x_t - u_{t-1}) / rho.

    R_1 is the identity. In one dimension this is the sign-adaptive rule
    that repeats the previous sign.
    """

    name = "greedy_cancel"

    def __call__(self, history: History, t: int, rho: float) -> np.ndarray:
        x = history.current
        if t == 1:
            return -rho * x
        prev = history.states[-2]
        image = (x - history.inputs[-1]) / rho
        a = prev / np.maximum(np.linalg.norm(prev, axis=1, keepdims=True), 1e-300)
        b = image / np.maximum(np.linalg.norm(image, axis=1, keepdims=True), 1e-300)
        v = a - b
        vv = np.sum(v * v, axis=1, keepdims=True)
        safe = vv > 1e-24
        coef = np.where(safe, 2.0 * np.sum(v * x, axis=1, keepdims=True) / np.where(safe, vv, 1.0), 0.0)
        return -rho * (x - coef * v)


CONTROLLERS = {'zero': ZeroController, 'greedy_cancel': GreedyCancelController}


@dataclass
class OrthogonalMCResult:
    """Frequency of sustained growth with a Clopper-Pearson interval."""
    d: int
    rho: float
    H: int
    controller: str
    successes: int
    trials: int
    frequency: float
    ci_low: float
    ci_high: float
    analytic_bound: float = field(default=0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {'d': self.d, 'rho': self.rho, 'H': self.H, 'controller': self.controller,
                'successes': self.successes, 'trials': self.trials, 'frequency': self.frequency,
                'ci_low': self.ci_low, 'ci_high': self.ci_high, 'analytic_bound': self.analytic_bound}


def growth_bound(d: int, rho: float, H: int) -> float:
    """1 - H exp(-d (1 - 1/rho)^2 / 2), floored at 0."""
    return max(0.0, 1.0 - H * float(np.exp(-d * (1.0 - 1.0 / rho) ** 2 / 2.0)))


def _rotate(x: np.ndarray, rng: np.random.Generator, exact: bool) -> np.ndarray:
    """O_t x_t for fresh Haar O_t, one per run."""
    if exact:
        return np.stack([random_orthogonal(x.shape[1], rng) @ row for row in x])
    # a Haar rotation sends x to a uniform point on the sphere of radius ||x||
    directions = rng.standard_normal(x.shape)
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    return directions * np.linalg.norm(x, axis=1, keepdims=True)


def orthogonal_compounding_mc(d: int, rho: float, H: int, controller: RotationController, trials: int,
                              rng: np.random.Generator, exact_rotations: bool = False,
                              confidence: float = 0.95) -> OrthogonalMCResult:
    """
    Frequency of {for all t <= H: ||x_{t+1}|| >= rho^(t/2) ||x_1||} under fresh random rotations.

    Args:
        d: Dimension
        rho: Growth factor, > 1
        H: Horizon
        controller: Causal rule that never sees O_t
        trials: Number of independent runs
        rng: Source of randomness
        exact_rotations: Multiply by sampled orthogonal matrices instead of
            drawing the rotated vector directly
        confidence: Level of the reported interval

    Returns:
        OrthogonalMCResult: Frequency, interval and the analytic lower bound
    """
    if d < 1 or H < 1 or trials < 1:
        raise PreconditionError(f"d, H and trials must be >= 1, got d={d}, H={H}, trials={trials}")
    if rho <= 1.0:
        raise PreconditionError(f"rho must exceed 1, got {rho}")

    x = sample_unit_ball(d, trials, rng)
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    x1_norm = np.linalg.norm(x, axis=1)
    alive = np.ones(trials, dtype=bool)
    history = History()
    for t in range(1, H + 1):
        history.push(x)
        u = np.asarray(controller(history, t, rho), dtype=float)
        history.record(u)
        x = rho * _rotate(x, rng, exact_rotations) + u
        alive &= np.linalg.norm(x, axis=1) >= rho ** (t / 2.0) * x1_norm

    successes = int(np.sum(alive))
    interval = binomtest(successes, trials).proportion_ci(confidence_level=confidence)
    result = OrthogonalMCResult(d=d, rho=rho, H=H, controller=controller.name, successes=successes,
                                trials=trials, frequency=successes / trials, ci_low=float(interval.low),
                                ci_high=float(interval.high), analytic_bound=growth_bound(d, rho, H))
    logger.info(f"Rotation growth d={d} rho={rho} H={H} {controller.name}: "
                f"{result.frequency:.4f} (bound {result.analytic_bound:.4f})")
    return result
