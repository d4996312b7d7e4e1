"""
Expert demonstration datasets.
"""

import numpy as np

from core.instances.base import Instance
from core.models.trajectory import Dataset, Trajectory
from core.utils.errors import PreconditionError
from core.utils.logger import Logger
from core.utils.rng import draw_seed

logger = Logger("DatasetSampler").logger


def expert_trajectory(inst: Instance, H: int, seed: int, explore_sigma: float = 0.0) -> Trajectory:
    """
    One demonstration drawn from ``np.random.default_rng(seed)``.

    With ``explore_sigma > 0`` the executed input is the expert action plus
    N(0, explore_sigma^2 I) and the expert action is kept as the label.
    """
    rng = np.random.default_rng(seed)
    init = inst.sample_init(rng)
    d = init.x1.shape[0]
    states = np.zeros((H, d))
    inputs = np.zeros((H, d))
    labels = np.zeros((H, d)) if explore_sigma > 0 else None
    x = np.asarray(init.x1, dtype=float)
    for t in range(1, H + 1):
        u_star = np.asarray(inst.expert_action(x, t), dtype=float)
        u = u_star + explore_sigma * rng.standard_normal(d) if explore_sigma > 0 else u_star
        states[t - 1], inputs[t - 1] = x, u
        if labels is not None:
            labels[t - 1] = u_star
        if t < H:
            x = np.asarray(inst.step(x, u, t), dtype=float)
    return Trajectory(states=states, inputs=inputs, seed=seed, instance_id=inst.instance_id,
                      branch=init.branch, labels=labels)


def sample_dataset(inst: Instance, n: int, H: int, rng: np.random.Generator,
                   explore_sigma: float = 0.0, seed: int = 0) -> Dataset:
    """
    Draw n i.i.d. demonstrations of length H.

    Every trajectory gets its own seed from ``rng``, so datasets from
    instances sharing an initial distribution are identical where the
    experts agree.

    Args:
        inst: Instance to demonstrate on
        n: Number of trajectories, >= 0
        H: Length of each trajectory, >= 1
        rng: Source of the per-trajectory seeds
        explore_sigma: Standard deviation of exploration noise on executed inputs
        seed: Seed recorded on the dataset for replay

    Returns:
        Dataset: The demonstrations
    """
    if n < 0:
        raise PreconditionError(f"n must be >= 0, got {n}")
    if H < 1:
        raise PreconditionError(f"H must be >= 1, got {H}")
    seeds = [draw_seed(rng) for _ in range(n)]
    trajectories = [expert_trajectory(inst, H, traj_seed, explore_sigma) for traj_seed in seeds]
    dataset = Dataset(trajectories=trajectories, H=H, instance_id=inst.instance_id, seed=seed,
                      explore_sigma=explore_sigma)
    logger.info(f"Sampled dataset n={n} H={H} on {inst.instance_id}: {dataset.branch_counts()}")
    return dataset
