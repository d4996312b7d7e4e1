"""
Action chunking: plan chunk_len inputs at a re-plan step, then execute them
open loop. Mid-chunk calls receive no history at all.
"""

from typing import Any, Dict, Optional

import numpy as np
import scipy.linalg

from core.models.trajectory import Dataset
from core.policies.base import History, MarkovPolicy, Policy

CHUNK_MODES = ("plan", "model")


class LinearModel:
    """Least-squares fit x_{t+1} ~ A x_t + B u_t from demonstrations."""

    def __init__(self, A: np.ndarray, B: np.ndarray, residual: float = 0.0):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.residual = residual

    @classmethod
    def fit(cls, dataset: Dataset) -> 'LinearModel':
        rows_x, rows_u, rows_next = [], [], []
        for traj in dataset.trajectories:
            if traj.H < 2:
                continue
            rows_x.append(traj.states[:-1])
            rows_u.append(traj.inputs[:-1])
            rows_next.append(traj.states[1:])
        if not rows_x:
            raise ValueError("Fitting a dynamics model needs trajectories of length >= 2")
        X = np.concatenate(rows_x)
        U = np.concatenate(rows_u)
        design = np.hstack([X, U])
        target = np.concatenate(rows_next)
        coef, _, _, _ = scipy.linalg.lstsq(design, target)
        d = X.shape[1]
        residual = float(np.sqrt(np.mean((design @ coef - target) ** 2)))
        return cls(A=coef[:d].T, B=coef[d:].T, residual=residual)

    def __call__(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.A @ x + self.B @ u

    def to_dict(self) -> Dict[str, Any]:
        return {'A': self.A.tolist(), 'B': self.B.tolist(), 'residual': self.residual}


class ChunkedPolicy(Policy):
    """
    Wraps a base policy into open-loop blocks of length chunk_len.

    mode 'plan' replays the base's own open-loop plan (``base.plan``);
    mode 'model' rolls the base policy through a learned dynamics model.
    """

    kind = "chunked"

    def __init__(self, base: Policy, chunk_len: int, mode: str = "plan", model: Optional[LinearModel] = None):
        if chunk_len < 1:
            raise ValueError(f"chunk_len must be >= 1, got {chunk_len}")
        if mode not in CHUNK_MODES:
            raise ValueError(f"Unknown chunk mode '{mode}', expected one of {CHUNK_MODES}")
        if mode == "plan" and not hasattr(base, "plan"):
            raise ValueError(f"Base policy of kind '{base.kind}' cannot produce open-loop plans")
        if mode == "model" and (model is None or not isinstance(base, MarkovPolicy)):
            raise ValueError("Model-mode chunking needs a fitted model and a Markov base policy")
        self.base = base
        self.chunk_len = chunk_len
        self.mode = mode
        self.model = model
        self.deterministic = base.deterministic
        self._buffer: Optional[np.ndarray] = None

    def observes(self, t: int) -> bool:
        return (t - 1) % self.chunk_len == 0

    def reset(self) -> None:
        self._buffer = None

    def _replan(self, x: np.ndarray, t: int, rng: np.random.Generator) -> np.ndarray:
        if self.mode == "plan":
            if getattr(self.base, "plan_needs_rng", False):
                return self.base.plan(x, self.chunk_len, rng)
            return self.base.plan(x, self.chunk_len)
        plan = np.zeros((self.chunk_len, x.shape[0]))
        state = x
        for j in range(self.chunk_len):
            plan[j] = self.base.action(state, t + j, rng)
            state = self.model(state, plan[j])
        return plan

    def act(self, history: Optional[History], t: int, rng: np.random.Generator) -> np.ndarray:
        offset = (t - 1) % self.chunk_len
        if offset == 0:
            if history is None:
                raise ValueError(f"Chunked policy needs the state at re-plan step t={t}")
            self._buffer = self._replan(history.current, t, rng)
        if self._buffer is None:
            raise RuntimeError("Chunked policy called mid-chunk before any plan was made")
        return self._buffer[offset].copy()

    def to_dict(self) -> Dict[str, Any]:
        return {
            'type': 'chunked',
            'chunk_len': self.chunk_len,
            'mode': self.mode,
            'base': self.base.to_dict(),
            'model': None if self.model is None else self.model.to_dict(),
        }


def chunk_wrap(base: Policy, chunk_len: int, mode: str = "plan", dataset: Optional[Dataset] = None,
               model: Optional[LinearModel] = None) -> ChunkedPolicy:
    """
    Execute ``base`` in open-loop chunks.

    Args:
        base: Policy to chunk; 'plan' mode needs a ``plan(x, length)`` method
        chunk_len: Inputs per chunk
        mode: 'plan' or 'model'
        dataset: Demonstrations to fit the dynamics model from ('model' mode)
        model: Pre-fitted dynamics model ('model' mode)

    Returns:
        ChunkedPolicy: The wrapped policy
    """
    if mode == "model" and model is None:
        if dataset is None:
            raise ValueError("Model-mode chunking needs a dataset or a fitted model")
        model = LinearModel.fit(dataset)
    return ChunkedPolicy(base, chunk_len, mode=mode, model=model)
