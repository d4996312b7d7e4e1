from typing import Any, Dict, Optional

import numpy as np

from core.instances.base import Instance
from core.policies.base import Policy
from core.policies.bc import BCPolicy
from core.policies.chunking import ChunkedPolicy, LinearModel
from core.policies.diffusion import ToyDiffusionPolicy
from core.policies.mlp import MLPPolicy
from core.policies.nonsimple import ConcentricPolicy, GamblersRuinPolicy, HistorySwitchingPolicy, SwitchingPolicy
from core.policies.simple import (ExpertPolicy, GaussianPolicy, LinearPolicy, MixturePolicy,
                                  RandomNoisePolicy, ZeroPolicy)


def policy_from_dict(data: Dict[str, Any], inst: Optional[Instance] = None) -> Policy:
    """
    Rebuild a policy from its ``to_dict`` payload.

    Args:
        data: Serialized policy
        inst: Instance the 'expert' type wraps

    Raises:
        ValueError: On an unknown type or an expert payload without an instance
    """
    kind = data.get('type')
    if kind == 'expert':
        if inst is None:
            raise ValueError("An expert policy needs its instance")
        return ExpertPolicy(inst)
    if kind == 'linear':
        return LinearPolicy(np.asarray(data['K'], dtype=float))
    if kind == 'zero':
        return ZeroPolicy(int(data['d']))
    if kind == 'gaussian':
        return GaussianPolicy(policy_from_dict(data['base'], inst), float(data['sigma']), int(data['d']))
    if kind == 'random_noise':
        return RandomNoisePolicy(int(data['d']), float(data['variance']))
    if kind == 'mixture':
        return MixturePolicy([policy_from_dict(c, inst) for c in data['components']], data['weights'])
    if kind == 'bc':
        return BCPolicy.from_dict(data)
    if kind == 'mlp':
        return MLPPolicy.from_dict(data)
    if kind == 'toy_diffusion':
        return ToyDiffusionPolicy.from_dict(data)
    if kind == 'gamblers_ruin':
        return GamblersRuinPolicy(float(data['rho']))
    if kind == 'concentric':
        return ConcentricPolicy(float(data['rho']))
    if kind == 'switching':
        return SwitchingPolicy(float(data['rho']))
    if kind == 'history_switching':
        return HistorySwitchingPolicy(float(data['rho']))
    if kind == 'chunked':
        model = data.get('model')
        model = None if model is None else LinearModel(np.asarray(model['A']), np.asarray(model['B']),
                                                       float(model.get('residual', 0.0)))
        return ChunkedPolicy(policy_from_dict(data['base'], inst), int(data['chunk_len']),
                             mode=data.get('mode', 'plan'), model=model)
    raise ValueError(f"Unknown policy type '{kind}'")
