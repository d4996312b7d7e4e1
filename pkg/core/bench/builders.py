"""
Turn a BenchConfig into concrete objects: target, instance, dataset and a
trained policy. Every generator is derived from the master seed, so the
objects are pure functions of the configuration.
"""

import dataclasses
from typing import Any, Dict, Type, TypeVar

import numpy as np

from core.bench.config import BenchConfig, ConstructionConfig
from core.funclass.hard_function import RegressionTarget, sample_hard_function, sample_mlp_function, zero_function
from core.instances.base import Instance
from core.instances.gambler import GamblerSystem
from core.instances.stable import StableInstance, make_stable_instance
from core.instances.unstable import make_unstable_instance
from core.models.reports import TrainingResult
from core.models.trajectory import Dataset
from core.policies.bc import bc_learn
from core.policies.chunking import chunk_wrap
from core.policies.diffusion import DiffusionConfig, toy_diffusion_train
from core.policies.mlp import MLPConfig, mlp_train
from core.policies.nonsimple import concentric_policy, gamblers_ruin_policy, switching_policy
from core.policies.simple import ExpertPolicy, RandomNoisePolicy, ZeroPolicy, gaussian_wrap
from core.simkit.dataset import sample_dataset
from core.utils.errors import ConfigError
from core.utils.logger import Logger
from core.utils.rng import derive_rng

T = TypeVar("T")

# stream keys under the master seed
TARGET_STREAM, DATA_STREAM, LEARNER_STREAM, EVAL_STREAM = 0, 1, 2, 3

logger = Logger("Builders").logger


def build_target(construction: ConstructionConfig, seed: int) -> RegressionTarget:
    rng = derive_rng(seed, TARGET_STREAM, construction.target_seed)
    if construction.target == "zero":
        return zero_function(construction.k, construction.s, construction.eps)
    if construction.target == "mlp":
        return sample_mlp_function(construction.k, rng)
    return sample_hard_function(construction.k, construction.s, construction.eps, rng)


def build_instance(config: BenchConfig) -> Instance:
    """
    Build the configured construction.

    Raises:
        ConfigError: If the construction parameters are rejected by the instance
    """
    c = config.construction
    try:
        if c.kind == "gambler":
            inst = GamblerSystem(c.rho, xi=c.xi, eps0=c.eps0)
        elif c.kind == "unstable":
            inst = make_unstable_instance(build_target(c, config.seed), c.rho, c.state_dim, k=c.k,
                                          variant=c.variant, rotation_seed=config.seed,
                                          packing_seed=config.seed)
        else:
            inst = make_stable_instance(build_target(c, config.seed), i=c.i, omega=c.omega, mu=c.mu,
                                        tau=c.tau, delta=c.delta, k=c.k)
    except ValueError as e:
        raise ConfigError(f"Invalid construction: {str(e)}")
    logger.info(f"Built {inst.instance_id} (d={inst.d})")
    return inst


def build_dataset(config: BenchConfig, inst: Instance) -> Dataset:
    rng = derive_rng(config.seed, DATA_STREAM, config.data.seed)
    return sample_dataset(inst, config.data.n, config.data.H, rng, explore_sigma=config.data.explore_sigma,
                          seed=config.data.seed)


def hyperparameter_config(cls: Type[T], overrides: Dict[str, Any], **fixed: Any) -> T:
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(overrides) - names)
    if unknown:
        raise ConfigError(f"Unknown {cls.__name__} hyperparameters: {unknown}")
    return cls(**{**overrides, **fixed})


def train_learner(config: BenchConfig, inst: Instance, dataset: Dataset) -> TrainingResult:
    """
    Fit or construct the configured learner.

    Chunking is applied on top of the base learner when chunk_len > 1,
    except for the diffusion policy which predicts whole chunks itself.

    Raises:
        ConfigError: If the learner does not fit the construction
    """
    learner = config.learner
    c = config.construction
    d = inst.d
    rng = derive_rng(config.seed, LEARNER_STREAM, config.data.seed)

    if learner.kind == "bc":
        if not isinstance(inst, StableInstance):
            raise ConfigError("Behavior cloning is defined for the stable construction only")
        policy = bc_learn(dataset, inst, completion=learner.completion, chunk_len=learner.chunk_len,
                          smoothness=learner.smoothness or c.s, neighborhood_size=learner.neighborhood_size)
        result = TrainingResult(policy=policy, status=policy.fit.status, errors=list(policy.fit.errors))
    elif learner.kind == "mlp":
        result = mlp_train(dataset, hyperparameter_config(MLPConfig, learner.hyperparameters), rng)
    elif learner.kind == "toy_diffusion":
        cfg = hyperparameter_config(DiffusionConfig, learner.hyperparameters, chunk_len=learner.chunk_len)
        result = toy_diffusion_train(dataset, cfg, rng)
    else:
        simple = {
            'expert': lambda: ExpertPolicy(inst),
            'zero': lambda: ZeroPolicy(d),
            'random_noise': lambda: RandomNoisePolicy(d),
            'gaussian': lambda: gaussian_wrap(ExpertPolicy(inst), learner.sigma, d),
            'gamblers_ruin': lambda: gamblers_ruin_policy(c.rho),
            'concentric': lambda: concentric_policy(c.rho),
            'switching': lambda: switching_policy(c.rho),
            'history_switching': lambda: switching_policy(c.rho, history_dependent=True),
        }
        result = TrainingResult(policy=simple[learner.kind]())

    if learner.chunk_len > 1:
        if learner.chunk_mode == "plan" and not hasattr(result.policy, "plan"):
            raise ConfigError(f"Learner '{learner.kind}' cannot produce open-loop plans; use chunk_mode 'model'")
        result.policy = chunk_wrap(result.policy, learner.chunk_len, mode=learner.chunk_mode, dataset=dataset)
    return result


def eval_rng(config: BenchConfig) -> np.random.Generator:
    return derive_rng(config.seed, EVAL_STREAM)
