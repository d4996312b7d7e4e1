from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np


@dataclass
class InitState:
    """
    Initial state together with the branch of the initial distribution it came from.

    Attributes:
        x1: Initial state
        branch: 'Z0' (regression patch), 'Z1' (near the origin) or 'none'
        y_level: Scale level of the Z1 branch (0 means Y = 1)
        z: Regression input of the Z0 branch
    """
    x1: np.ndarray
    branch: str = "none"
    y_level: int = 0
    z: Optional[np.ndarray] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'x1': np.asarray(self.x1).tolist(),
            'branch': self.branch,
            'y_level': self.y_level,
            'z': None if self.z is None else np.asarray(self.z).tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'InitState':
        return cls(
            x1=np.asarray(data['x1'], dtype=float),
            branch=data.get('branch', 'none'),
            y_level=int(data.get('y_level', 0)),
            z=None if data.get('z') is None else np.asarray(data['z'], dtype=float),
        )


@dataclass
class Trajectory:
    """
    A closed-loop trajectory x_1..x_H with inputs u_1..u_H.

    ``inputs`` are the executed inputs, so states[t+1] == step(states[t], inputs[t]).
    ``labels`` holds the expert actions when they differ from the executed
    ones (exploration-noise datasets).

    Attributes:
        states: (H, d) array
        inputs: (H, d) array
        seed: Seed the trajectory was generated from
        instance_id: Identifier of the generating instance
        branch: Branch of the initial state
        status: 'ok' or 'blowup'
        blowup_t: First time index (1-based) whose state left the guard ball
        labels: Optional (H, d) expert labels
    """
    states: np.ndarray
    inputs: np.ndarray
    seed: int
    instance_id: str
    branch: str = "none"
    status: str = "ok"
    blowup_t: Optional[int] = None
    labels: Optional[np.ndarray] = None

    @property
    def H(self) -> int:
        return int(self.states.shape[0])

    @property
    def targets(self) -> np.ndarray:
        """Actions a learner should imitate."""
        return self.inputs if self.labels is None else self.labels

    def to_dict(self) -> Dict[str, Any]:
        return {
            'states': self.states.tolist(),
            'inputs': self.inputs.tolist(),
            'seed': self.seed,
            'instance_id': self.instance_id,
            'branch': self.branch,
            'status': self.status,
            'blowup_t': self.blowup_t,
            'labels': None if self.labels is None else self.labels.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Trajectory':
        return cls(
            states=np.asarray(data['states'], dtype=float),
            inputs=np.asarray(data['inputs'], dtype=float),
            seed=int(data['seed']),
            instance_id=data['instance_id'],
            branch=data.get('branch', 'none'),
            status=data.get('status', 'ok'),
            blowup_t=data.get('blowup_t'),
            labels=None if data.get('labels') is None else np.asarray(data['labels'], dtype=float),
        )


@dataclass
class Dataset:
    """
    Expert demonstrations generated from one instance.

    Attributes:
        trajectories: The n demonstrations
        H: Length of every demonstration
        instance_id: Identifier of the generating instance
        seed: Seed the dataset was drawn with
        explore_sigma: Exploration noise used while generating (0 for pure expert data)
    """
    trajectories: List[Trajectory]
    H: int
    instance_id: str
    seed: int = 0
    explore_sigma: float = 0.0
    errors: List[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.trajectories)

    def branch_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for traj in self.trajectories:
            counts[traj.branch] = counts.get(traj.branch, 0) + 1
        return counts

    def stacked_pairs(self) -> tuple:
        """All (state, target action) pairs stacked as two (n*H, d) arrays."""
        if not self.trajectories:
            return np.zeros((0, 0)), np.zeros((0, 0))
        states = np.concatenate([t.states for t in self.trajectories])
        targets = np.concatenate([t.targets for t in self.trajectories])
        return states, targets

    def to_dict(self) -> Dict[str, Any]:
        return {
            'H': self.H,
            'n': self.n,
            'instance_id': self.instance_id,
            'seed': self.seed,
            'explore_sigma': self.explore_sigma,
            'trajectories': [t.to_dict() for t in self.trajectories],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Dataset':
        return cls(
            trajectories=[Trajectory.from_dict(t) for t in data['trajectories']],
            H=int(data['H']),
            instance_id=data['instance_id'],
            seed=int(data.get('seed', 0)),
            explore_sigma=float(data.get('explore_sigma', 0.0)),
        )
