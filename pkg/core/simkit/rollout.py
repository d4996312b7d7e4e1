"""
Closed-loop rollouts.
"""

from typing import Optional, Tuple

import numpy as np

from core.instances.base import Instance
from core.instances.gambler import GamblerSystem
from core.models.trajectory import InitState, Trajectory
from core.policies.base import History, Policy
from core.utils.errors import PreconditionError
from core.utils.settings import load_constants


def rollout(policy: Policy, inst: Instance, init: InitState, H: int, rng: np.random.Generator,
            seed: int = 0) -> Trajectory:
    """
    Run ``policy`` on ``inst`` for H steps from ``init``.

    The policy is cloned, so per-trajectory state never leaks between
    rollouts. A state that is non-finite or leaves the guard ball stops the
    rollout; the trajectory then holds the steps completed before it, with
    status 'blowup' and the offending time in ``blowup_t``.

    Args:
        policy: Policy to execute
        inst: Instance providing dynamics
        init: Initial state
        H: Horizon, >= 1
        rng: Source of policy randomness
        seed: Seed recorded on the trajectory

    Returns:
        Trajectory: Executed states and inputs
    """
    if H < 1:
        raise PreconditionError(f"H must be >= 1, got {H}")
    guard = load_constants().blowup_norm
    actor = policy.clone()
    history = History()
    d = np.asarray(init.x1).shape[0]
    states = np.zeros((H, d))
    inputs = np.zeros((H, d))
    x = np.asarray(init.x1, dtype=float)

    for t in range(1, H + 1):
        history.push(x)
        u = np.asarray(actor.act(history if actor.observes(t) else None, t, rng), dtype=float).reshape(d)
        history.record(u)
        states[t - 1], inputs[t - 1] = x, u
        if t == H:
            break
        x = np.asarray(inst.step(x, u, t), dtype=float)
        if not np.all(np.isfinite(x)) or np.linalg.norm(x) > guard:
            return Trajectory(states=states[:t], inputs=inputs[:t], seed=seed, instance_id=inst.instance_id,
                              branch=init.branch, status="blowup", blowup_t=t + 1)

    return Trajectory(states=states, inputs=inputs, seed=seed, instance_id=inst.instance_id, branch=init.branch)


def rollout_batch(policy: Policy, system: GamblerSystem, x1: np.ndarray, H: int,
                  rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """
    Advance many independent scalar runs at once.

    Args:
        policy: Elementwise scalar policy
        system: Gambler system
        x1: Initial states, shape (runs,)
        H: Number of states per run
        rng: Source of policy randomness

    Returns:
        Tuple of states (H, runs) for x_1..x_H and inputs (H - 1, runs)
    """
    if H < 1:
        raise PreconditionError(f"H must be >= 1, got {H}")
    actor = policy.clone()
    x = np.asarray(x1, dtype=float).copy()
    history = History()
    states = np.zeros((H, x.shape[0]))
    inputs = np.zeros((max(H - 1, 0), x.shape[0]))
    for t in range(1, H + 1):
        states[t - 1] = x
        history.push(x)
        if t == H:
            break
        u = np.asarray(actor.act(history if actor.observes(t) else None, t, rng), dtype=float)
        u = np.broadcast_to(u, x.shape).copy()
        history.record(u)
        inputs[t - 1] = u
        x = system.step(x, u, t)
    return states, inputs


def e1_cost_curve(traj: Trajectory, H: Optional[int] = None) -> np.ndarray:
    """
    max_{s <= t} |<e1, x_s>| for t = 1..H.

    A blown-up trajectory is padded with the clip value 1 (or its running max
    if larger) after the blow-up.
    """
    H = traj.H if H is None else H
    curve = np.maximum.accumulate(np.abs(traj.states[:, 0]))
    if curve.shape[0] < H:
        fill = max(1.0, float(curve[-1])) if curve.shape[0] else 1.0
        curve = np.concatenate([curve, np.full(H - curve.shape[0], fill)])
    return curve[:H]
