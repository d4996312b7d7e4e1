"""
Behavior cloning on the stable construction.

The learner knows the construction family (mu, tau, x_offset) but not
(g, i, omega). It splits demonstrations by the support of their initial
state, regresses g from the first action of the patch branch and fits a
linear gain on the origin branch. Origin-branch data never excites e1, so
the first gain column is set by a completion rule.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import scipy.linalg

from core.funclass.local_estimator import LocalEstimator, RegressionSample, fit_local_estimator_clamped
from core.instances.stable import StableInstance
from core.matkit.bump import bump_radial
from core.models.trajectory import Dataset
from core.policies.base import MarkovPolicy
from core.utils.errors import PreconditionError
from core.utils.logger import Logger

COMPLETIONS = ("least_norm", "assume_i", "adversarial")

logger = Logger("BehaviorCloning").logger


@dataclass
class BCFit:
    """
    Attributes:
        g_hat: Regressor of g, None when the patch branch had no data
        K_hat: Fitted gain
        chunk_gains: Gains predicting u_{t+j} from x_t, j = 0..chunk_len-1
        n_z0, n_z1: Trajectories per branch
        residual: RMS residual of the origin-branch least squares
        completion: Rule used for the first gain column
        identified_e1: True when the data excited e1 and column 1 was fitted
        status: 'ok' or 'degraded'
    """
    g_hat: Optional[LocalEstimator]
    K_hat: np.ndarray
    chunk_gains: List[np.ndarray]
    n_z0: int
    n_z1: int
    residual: float
    completion: str
    identified_e1: bool = False
    status: str = "ok"
    errors: List[str] = field(default_factory=list)

    def fit_report(self) -> Dict[str, Any]:
        return {
            'n_z0': self.n_z0,
            'n_z1': self.n_z1,
            'residual': self.residual,
            'completion': self.completion,
            'identified_e1': self.identified_e1,
            'status': self.status,
            'errors': list(self.errors),
        }


class BCPolicy(MarkovPolicy):
    """pi_hat(x) = K_hat x (1 - restrict(x)) + tau restrict(x) g_hat(x[2:] - x_offset[2:]) e1."""

    kind = "deterministic"

    def __init__(self, fit: BCFit, tau: float, x_offset: np.ndarray):
        self.fit = fit
        self.tau = tau
        self.x_offset = np.asarray(x_offset, dtype=float)
        self.d = self.x_offset.shape[0]

    @property
    def status(self) -> str:
        return self.fit.status

    def _restrict(self, x: np.ndarray) -> float:
        return bump_radial(np.linalg.norm(x - self.x_offset))

    def _patch_term(self, x: np.ndarray, r: float) -> float:
        if r <= 0.0 or self.fit.g_hat is None:
            return 0.0
        return (self.tau * r) * float(self.fit.g_hat(x[2:] - self.x_offset[2:]))

    def action(self, x: np.ndarray, t: int = 1, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        r = self._restrict(x)
        out = (self.fit.K_hat @ x) * (1.0 - r)
        if r > 0.0:
            out[0] = out[0] + self._patch_term(x, r)
        return out

    def mean(self, x: np.ndarray, t: int = 1) -> np.ndarray:
        return self.action(x, t)

    def plan(self, x: np.ndarray, length: int) -> np.ndarray:
        """Open-loop inputs u_t..u_{t+length-1} predicted from x_t."""
        if length > len(self.fit.chunk_gains):
            raise ValueError(f"Plan length {length} exceeds the fitted chunk length {len(self.fit.chunk_gains)}")
        out = np.zeros((length, self.d))
        out[0] = self.action(x)
        r = self._restrict(x)
        for j in range(1, length):
            out[j] = (self.fit.chunk_gains[j] @ x) * (1.0 - r)
        return out

    def to_dict(self) -> Dict[str, Any]:
        g_hat = self.fit.g_hat
        return {
            'type': 'bc',
            'tau': self.tau,
            'x_offset': self.x_offset.tolist(),
            'K_hat': self.fit.K_hat.tolist(),
            'chunk_gains': [K.tolist() for K in self.fit.chunk_gains],
            'g_hat': None if g_hat is None else {
                'inputs': g_hat.sample.inputs.tolist(),
                'labels': g_hat.sample.labels.tolist(),
                'degree': g_hat.degree,
                'neighborhood_size': g_hat.neighborhood_size,
            },
            'fit_report': self.fit.fit_report(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'BCPolicy':
        report = data['fit_report']
        g_data = data.get('g_hat')
        g_hat = None
        if g_data is not None:
            sample = RegressionSample(np.asarray(g_data['inputs']), np.asarray(g_data['labels']))
            g_hat = LocalEstimator(sample, int(g_data['degree']), int(g_data['neighborhood_size']))
        fit = BCFit(
            g_hat=g_hat,
            K_hat=np.asarray(data['K_hat'], dtype=float),
            chunk_gains=[np.asarray(K, dtype=float) for K in data['chunk_gains']],
            n_z0=int(report['n_z0']),
            n_z1=int(report['n_z1']),
            residual=float(report['residual']),
            completion=report['completion'],
            identified_e1=bool(report.get('identified_e1', False)),
            status=report.get('status', 'ok'),
            errors=list(report.get('errors', [])),
        )
        return cls(fit, tau=float(data['tau']), x_offset=np.asarray(data['x_offset']))


def fit_linear_gain(states: np.ndarray, actions: np.ndarray, columns: Optional[slice] = None
                    ) -> Tuple[np.ndarray, float]:
    """
    Least-squares gain K with actions ~ states @ K.T, restricted to ``columns``.

    Returns:
        Tuple of the (d, d) gain (zeros outside ``columns``) and the RMS residual
    """
    d = states.shape[1]
    columns = slice(0, d) if columns is None else columns
    K = np.zeros((actions.shape[1], d))
    if states.shape[0] == 0:
        return K, 0.0
    coef, _, _, _ = scipy.linalg.lstsq(states[:, columns], actions)
    K[:, columns] = coef.T
    residual = float(np.sqrt(np.mean((states @ K.T - actions) ** 2)))
    return K, residual


def _completion_column(family: StableInstance, completion: str, offset: int) -> np.ndarray:
    """First column of the j-step gain K_m (A_m + K_m)^j under the chosen index m."""
    if completion == "least_norm":
        return np.zeros(family.d)
    index = family.i if completion == "assume_i" else 3 - family.i
    sibling = family.with_index(index)
    gain = sibling.Kbar @ np.linalg.matrix_power(sibling.Abar + sibling.Kbar, offset)
    return gain[:, 0]


def _split(dataset: Dataset, family: StableInstance):
    z0, z1 = [], []
    for traj in dataset.trajectories:
        on_patch = np.linalg.norm(traj.states[0] - family.x_offset) <= 1.0
        (z0 if on_patch else z1).append(traj)
    return z0, z1


def bc_learn(dataset: Dataset, family: StableInstance, completion: str = "least_norm",
             chunk_len: int = 1, smoothness: int = 2,
             neighborhood_size: Optional[int] = None) -> BCPolicy:
    """
    Fit the behavior-cloning policy.

    Args:
        dataset: Expert demonstrations from the stable construction
        family: Instance providing the family parameters (mu, tau, x_offset);
            its (i) is read only by the 'assume_i' and 'adversarial' completions
        completion: 'least_norm', 'assume_i' or 'adversarial'
        chunk_len: Number of per-offset gains to fit for open-loop plans
        smoothness: s; the local regressor has degree s - 1
        neighborhood_size: Neighbours per local fit

    Returns:
        BCPolicy: The learned policy, status 'degraded' when a branch had no data

    Raises:
        PreconditionError: On an unknown completion or chunk_len < 1
    """
    if completion not in COMPLETIONS:
        raise PreconditionError(f"Unknown completion '{completion}', expected one of {COMPLETIONS}")
    if chunk_len < 1:
        raise PreconditionError(f"chunk_len must be >= 1, got {chunk_len}")

    d = family.d
    errors: List[str] = []
    z0, z1 = _split(dataset, family)

    g_hat = None
    if z0:
        inputs = np.stack([traj.states[0][2:] - family.x_offset[2:] for traj in z0])
        labels = np.array([traj.targets[0][0] / family.tau for traj in z0])
        g_hat = fit_local_estimator_clamped(RegressionSample(inputs, labels), degree=max(0, smoothness - 1),
                                            neighborhood_size=neighborhood_size)
    else:
        errors.append("no patch-branch samples: g_hat is identically zero")
        logger.warning(f"BC on dataset of n={dataset.n} has no patch-branch samples; using g_hat = 0")

    if z1:
        states = np.concatenate([traj.states for traj in z1])
        targets = np.concatenate([traj.targets for traj in z1])
    else:
        states, targets = np.zeros((0, d)), np.zeros((0, d))
        errors.append("no origin-branch samples: K_hat is zero")
        logger.warning(f"BC on dataset of n={dataset.n} has no origin-branch samples; using K_hat = 0")

    scale = max(1.0, float(np.max(np.abs(states)))) if states.size else 1.0
    identified = bool(states.size) and float(np.max(np.abs(states[:, 0]))) > 1e-9 * scale

    chunk_gains: List[np.ndarray] = []
    residual = 0.0
    for j in range(chunk_len):
        if z1:
            X = np.concatenate([traj.states[:traj.H - j] for traj in z1 if traj.H > j] or [np.zeros((0, d))])
            U = np.concatenate([traj.targets[j:] for traj in z1 if traj.H > j] or [np.zeros((0, d))])
        else:
            X, U = np.zeros((0, d)), np.zeros((0, d))
        if identified:
            K_j, res = fit_linear_gain(X, U)
        else:
            K_j, res = fit_linear_gain(X, U, columns=slice(1, d))
            if X.shape[0] > 0:
                K_j[:, 0] = _completion_column(family, completion, j)
        if j == 0:
            residual = res
        chunk_gains.append(K_j)

    status = "degraded" if errors else "ok"
    fit = BCFit(g_hat=g_hat, K_hat=chunk_gains[0], chunk_gains=chunk_gains, n_z0=len(z0), n_z1=len(z1),
                residual=residual, completion=completion, identified_e1=identified, status=status,
                errors=errors)
    logger.info(f"BC fit: n_z0={len(z0)} n_z1={len(z1)} completion={completion} "
                f"chunk_len={chunk_len} residual={residual:.2e} status={status}")
    return BCPolicy(fit, tau=family.tau, x_offset=family.x_offset)
