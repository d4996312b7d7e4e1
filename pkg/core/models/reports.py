from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np


@dataclass(frozen=True)
class MonteCarloEstimate:
    """
    A Monte Carlo mean with its standard error.

    Attributes:
        value: Point estimate
        stderr: Standard error of the estimate
        samples: Number of samples it was computed from
    """
    value: float
    stderr: float
    samples: int

    @classmethod
    def from_samples(cls, samples: np.ndarray) -> 'MonteCarloEstimate':
        samples = np.asarray(samples, dtype=float).reshape(-1)
        n = samples.size
        if n == 0:
            return cls(value=0.0, stderr=0.0, samples=0)
        # pairwise summation keeps the reduction independent of chunking
        mean = float(np.sum(samples) / n)
        stderr = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        return cls(value=mean, stderr=stderr, samples=n)

    def to_dict(self) -> Dict[str, Any]:
        return {'value': self.value, 'stderr': self.stderr, 'samples': self.samples}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MonteCarloEstimate':
        return cls(value=float(data['value']), stderr=float(data['stderr']), samples=int(data['samples']))


@dataclass
class RiskReport:
    """
    Risks of one policy on one instance.

    Attributes:
        instance_id: Identifier of the evaluated instance
        policy_kind: Kind of the evaluated policy
        H: Horizon
        m_rollouts: Rollouts per estimate
        expert_l2: Error under the expert state distribution
        cost_risk: Execution cost gap to the expert
        traj_l1: Clipped coupled trajectory gap
        quantile: (delta, (1 - delta)-quantile of the trajectory cost)
        config: Resolved run configuration the report came from
        errors: Degraded statuses met while evaluating
    """
    instance_id: str
    policy_kind: str
    H: int
    m_rollouts: int
    expert_l2: MonteCarloEstimate
    cost_risk: MonteCarloEstimate
    traj_l1: MonteCarloEstimate
    quantile: Tuple[float, float]
    config: Dict[str, Any] = field(default_factory=dict)
    errors: List[str] = field(default_factory=list)

    def rows(self, n: int, seed: int, status: str = "ok") -> List[Dict[str, Any]]:
        """Flatten into sweep CSV rows, one per metric."""
        base = {'instance_id': self.instance_id, 'policy_kind': self.policy_kind,
                'n': n, 'H': self.H, 'seed': seed, 'status': status}
        metrics = [
            ('expert_l2', self.expert_l2.value, self.expert_l2.stderr),
            ('cost_risk', self.cost_risk.value, self.cost_risk.stderr),
            ('traj_l1', self.traj_l1.value, self.traj_l1.stderr),
            (f'quantile_{self.quantile[0]:g}', self.quantile[1], float('nan')),
        ]
        return [{**base, 'metric': name, 'value': value, 'stderr': stderr} for name, value, stderr in metrics]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'instance_id': self.instance_id,
            'policy_kind': self.policy_kind,
            'H': self.H,
            'm_rollouts': self.m_rollouts,
            'expert_l2': self.expert_l2.to_dict(),
            'cost_risk': self.cost_risk.to_dict(),
            'traj_l1': self.traj_l1.to_dict(),
            'quantile': {'delta': self.quantile[0], 'value': self.quantile[1]},
            'config': self.config,
            'errors': list(self.errors),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RiskReport':
        return cls(
            instance_id=data['instance_id'],
            policy_kind=data['policy_kind'],
            H=int(data['H']),
            m_rollouts=int(data['m_rollouts']),
            expert_l2=MonteCarloEstimate.from_dict(data['expert_l2']),
            cost_risk=MonteCarloEstimate.from_dict(data['cost_risk']),
            traj_l1=MonteCarloEstimate.from_dict(data['traj_l1']),
            quantile=(float(data['quantile']['delta']), float(data['quantile']['value'])),
            config=data.get('config', {}),
            errors=list(data.get('errors', [])),
        )


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one verification check."""
    name: str
    claim: str
    passed: bool
    detail: str = ""
    value: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'name': self.name, 'claim': self.claim, 'passed': self.passed,
                'detail': self.detail, 'value': self.value}


@dataclass(frozen=True)
class TrainingPoint:
    """Losses at one evaluation step of a training run."""
    iteration: int
    train_loss: float
    val_loss: float
    rollout_cost: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {'iteration': self.iteration, 'train_loss': self.train_loss,
                'val_loss': self.val_loss, 'rollout_cost': self.rollout_cost}


@dataclass
class TrainingResult:
    """
    A trained policy with its loss trace.

    Attributes:
        policy: The trained policy
        trace: Evaluation points in iteration order
        status: 'ok' or 'degraded'
        errors: Degraded statuses met during training
    """
    policy: Any
    trace: List[TrainingPoint] = field(default_factory=list)
    status: str = "ok"
    errors: List[str] = field(default_factory=list)

    def trace_rows(self) -> List[Dict[str, Any]]:
        return [p.to_dict() for p in self.trace]
