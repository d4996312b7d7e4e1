"""
Named sweep presets.

A preset fixes the construction it runs on, the sweep grid, and how one
grid cell turns into CSV rows. Cells group every horizon of the grid
because rollouts to the largest H contain the shorter ones as prefixes.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core.bench.builders import (EVAL_STREAM, LEARNER_STREAM, build_dataset, build_instance,
                                 hyperparameter_config, train_learner)
from core.bench.config import BenchConfig, SweepGrid, build_grid, with_overrides
from core.funclass.rates import RateSweep, log_log_slopes
from core.instances.base import Instance
from core.models.reports import MonteCarloEstimate
from core.policies.base import Policy
from core.policies.mlp import MLPConfig, mlp_train
from core.simkit.probes import CONTROLLERS, orthogonal_compounding_mc
from core.simkit.risks import evaluate_policy
from core.simkit.rollout import e1_cost_curve, rollout, rollout_batch
from core.utils.errors import ConfigError
from core.utils.rng import derive_rng

HORIZONS = [2, 4, 8, 12, 20, 26, 32]


@dataclass(frozen=True)
class SweepCell:
    """One unit of sweep work: every horizon for a (policy_kind, chunk_len, n, seed) point."""
    preset: str
    policy_kind: str
    chunk_len: int
    n: int
    seed: int
    horizons: Tuple[int, ...]

    @property
    def key(self) -> str:
        return f"{self.policy_kind}-l{self.chunk_len}-n{self.n}-s{self.seed}"

    @property
    def sort_key(self) -> Tuple[str, int, int, int]:
        return (self.policy_kind, self.chunk_len, self.n, self.seed)

    def to_dict(self) -> Dict[str, Any]:
        return {'preset': self.preset, 'policy_kind': self.policy_kind, 'chunk_len': self.chunk_len,
                'n': self.n, 'seed': self.seed, 'horizons': list(self.horizons)}


def make_row(instance_id: str, policy_kind: str, n: int, H: Optional[int], metric: str, value: float,
             stderr: float = float('nan'), seed: int = 0, status: str = "ok",
             step: Optional[int] = None) -> Dict[str, Any]:
    return {'instance_id': instance_id, 'policy_kind': policy_kind, 'n': n, 'H': H, 'metric': metric,
            'value': float(value), 'stderr': float(stderr), 'seed': seed, 'status': status, 'step': step}


def row_sort_key(row: Dict[str, Any]) -> Tuple:
    def num(v):
        return -1 if v is None or v == "" else int(v)
    return (str(row['policy_kind']), num(row.get('n')), num(row.get('seed')), num(row.get('H')),
            num(row.get('step')), str(row['metric']))


class Preset(ABC):
    """A named sweep."""

    name: str = ""
    description: str = ""
    overrides: Dict[str, Any] = {}
    grid_axes: Dict[str, Any] = {}

    def configure(self, config: BenchConfig) -> BenchConfig:
        return with_overrides(config, self.overrides)

    def grid(self, axes: Optional[Dict[str, Any]] = None) -> SweepGrid:
        return build_grid({**self.grid_axes, **(axes or {})})

    def cells(self, grid: SweepGrid) -> List[SweepCell]:
        return [SweepCell(self.name, kind, chunk, n, seed, grid.horizons)
                for kind, chunk, n, seed in grid.cells()]

    @abstractmethod
    def run_cell(self, cell: SweepCell, config: BenchConfig) -> List[Dict[str, Any]]:
        """Rows for one cell."""

    def summarize(self, rows: List[Dict[str, Any]], config: BenchConfig) -> List[Dict[str, Any]]:
        """Extra rows computed across cells."""
        return []


def _shared_rollouts(policy: Policy, inst: Instance, config: BenchConfig, seed: int, H: int, m: int):
    """m rollouts from initial states shared by every policy evaluated under ``seed``."""
    trajectories = []
    for j in range(m):
        init = inst.sample_init(derive_rng(config.seed, EVAL_STREAM, seed, j))
        trajectories.append(rollout(policy, inst, init, H, derive_rng(config.seed, EVAL_STREAM, seed, j, 1), seed=j))
    return trajectories


def rollout_cost_estimates(policy: Policy, inst: Instance, config: BenchConfig, seed: int,
                           horizons: Tuple[int, ...], m: int) -> Dict[int, Tuple[MonteCarloEstimate, MonteCarloEstimate]]:
    """
    Per horizon: mean max_{s<=H} |<e1, x_s>| and mean trajectory cost.

    The expert's trajectory cost vanishes on every construction, so the
    second estimate is the cost risk.
    """
    H_max = max(horizons)
    trajectories = _shared_rollouts(policy, inst, config, seed, H_max, m)
    curves = np.stack([e1_cost_curve(traj, H_max) for traj in trajectories])
    out = {}
    for H in horizons:
        costs = []
        for traj in trajectories:
            blown = traj.status == "blowup" and traj.blowup_t is not None and traj.blowup_t <= H
            steps = min(H, traj.H)
            costs.append(inst.traj_cost(traj.states[:steps], traj.inputs[:steps], blown_up=blown))
        out[H] = (MonteCarloEstimate.from_samples(curves[:, H - 1]), MonteCarloEstimate.from_samples(np.array(costs)))
    return out


def _learner_overrides(policy_kind: str, chunk_len: int) -> Dict[str, Any]:
    if policy_kind.startswith("chunk"):
        try:
            length = int(policy_kind[len("chunk"):])
        except ValueError:
            raise ConfigError(f"Bad chunked policy kind '{policy_kind}'")
        return {'kind': 'bc', 'chunk_len': length}
    return {'kind': policy_kind, 'chunk_len': chunk_len}


class PolicyZooPreset(Preset):
    name = "figure1"
    description = "Rollout cost against H for bc, random noise, toy diffusion and chunked bc"
    overrides = {'construction': {'kind': 'stable'}}
    grid_axes = {'n': [256], 'H': HORIZONS, 'policy_kind': ['bc', 'random_noise', 'toy_diffusion', 'chunk4', 'chunk8'],
                 'chunk_len': [1], 'seed': [0, 1, 2, 3, 4]}
    inits_per_seed = 16

    def run_cell(self, cell: SweepCell, config: BenchConfig) -> List[Dict[str, Any]]:
        cfg = with_overrides(config, {'data': {'n': cell.n, 'H': max(cell.horizons), 'seed': cell.seed},
                                      'learner': _learner_overrides(cell.policy_kind, cell.chunk_len)})
        inst = build_instance(cfg)
        result = train_learner(cfg, inst, build_dataset(cfg, inst))
        rows = []
        for H, (curve, cost) in rollout_cost_estimates(result.policy, inst, cfg, cell.seed, cell.horizons,
                                                       self.inits_per_seed).items():
            rows.append(make_row(inst.instance_id, cell.policy_kind, cell.n, H, 'rollout_cost', curve.value,
                                 curve.stderr, cell.seed, result.status))
            rows.append(make_row(inst.instance_id, cell.policy_kind, cell.n, H, 'cost_risk', cost.value,
                                 cost.stderr, cell.seed, result.status))
        return rows


class TrainingCurvePreset(Preset):
    name = "figure2"
    description = "MLP training and validation loss with rollout cost at every checkpoint"
    overrides = {'construction': {'kind': 'stable'}}
    grid_axes = {'n': [256], 'H': [32], 'policy_kind': ['mlp'], 'chunk_len': [1], 'seed': [0, 1, 2]}
    inits_per_seed = 16

    def run_cell(self, cell: SweepCell, config: BenchConfig) -> List[Dict[str, Any]]:
        H = max(cell.horizons)
        cfg = with_overrides(config, {'data': {'n': cell.n, 'H': H, 'seed': cell.seed},
                                      'learner': {'kind': 'mlp', 'chunk_len': 1}})
        inst = build_instance(cfg)
        dataset = build_dataset(cfg, inst)

        def checkpoint(iteration: int, policy: Policy) -> float:
            curve, _ = rollout_cost_estimates(policy, inst, cfg, cell.seed, (H,), self.inits_per_seed)[H]
            return curve.value

        mlp_config = hyperparameter_config(MLPConfig, cfg.learner.hyperparameters)
        result = mlp_train(dataset, mlp_config, derive_rng(cfg.seed, LEARNER_STREAM, cell.seed),
                           checkpoint_callback=checkpoint)
        rows = []
        for point in result.trace:
            for metric in ('train_loss', 'val_loss', 'rollout_cost'):
                rows.append(make_row(inst.instance_id, 'mlp', cell.n, H, metric, getattr(point, metric),
                                     seed=cell.seed, status=result.status, step=point.iteration))
        return rows


class RatesPreset(Preset):
    name = "rates"
    description = "Local polynomial regression risk against n on hard functions"
    overrides = {'construction': {'k': 2, 's': 2}}
    grid_axes = {'n': [64, 128, 256, 512, 1024, 2048, 4096], 'H': [1], 'policy_kind': ['local_poly'],
                 'chunk_len': [1], 'seed': list(range(10))}
    m_queries = 4096

    def run_cell(self, cell: SweepCell, config: BenchConfig) -> List[Dict[str, Any]]:
        c = config.construction
        risk = RateSweep(c.k, c.s, m_queries=self.m_queries).risk_cell(cell.n, config.seed, cell.seed)
        return [make_row(f"regression-k{c.k}-s{c.s}", cell.policy_kind, cell.n, None, 'regression_risk', risk,
                         seed=cell.seed)]

    def summarize(self, rows: List[Dict[str, Any]], config: BenchConfig) -> List[Dict[str, Any]]:
        c = config.construction
        risks = {(int(r['n']), int(r['seed'])): float(r['value']) for r in rows
                 if r['metric'] == 'regression_risk' and r['status'] == 'ok'}
        if not risks or min(risks.values()) <= 1e-14:
            return []
        n_grid = sorted({n for n, _ in risks})
        seeds = sorted({j for _, j in risks})
        if len(n_grid) < 2:
            return []
        slopes = log_log_slopes(risks, n_grid, seeds)
        instance_id = f"regression-k{c.k}-s{c.s}"
        out = [make_row(instance_id, 'local_poly', None, None, 'slope', s, seed=j) for s, j in zip(slopes, seeds)]
        if slopes:
            est = MonteCarloEstimate.from_samples(np.array(slopes))
            out.append(make_row(instance_id, 'local_poly', None, None, 'slope_mean', est.value, est.stderr, seed=None))
        return out


class UnstablePreset(Preset):
    name = "unstable"
    description = "Risks of simple policies on the rotated unstable system and rotation growth frequencies"
    overrides = {'construction': {'kind': 'unstable', 'variant': 'time_varying', 'rho': 1.5, 'd': 8}}
    grid_axes = {'n': [0], 'H': [2, 4, 8], 'policy_kind': ['expert', 'gaussian', 'random_noise', 'zero', 'greedy_cancel'],
                 'chunk_len': [1], 'seed': [0, 1, 2]}
    growth_trials = 2000

    def run_cell(self, cell: SweepCell, config: BenchConfig) -> List[Dict[str, Any]]:
        c = config.construction
        rows = []
        if cell.policy_kind in CONTROLLERS:
            instance_id = f"rotations-d{c.state_dim}-rho{c.rho:g}"
            for H in cell.horizons:
                rng = derive_rng(config.seed, EVAL_STREAM, cell.seed, H)
                result = orthogonal_compounding_mc(c.state_dim, c.rho, H, CONTROLLERS[cell.policy_kind](),
                                                   self.growth_trials, rng)
                p = result.frequency
                rows.append(make_row(instance_id, cell.policy_kind, cell.n, H, 'growth_frequency', p,
                                     float(np.sqrt(p * (1.0 - p) / result.trials)), cell.seed))
            return rows

        cfg = with_overrides(config, {'data': {'n': 0, 'seed': cell.seed},
                                      'learner': {'kind': cell.policy_kind, 'chunk_len': 1}})
        inst = build_instance(cfg)
        result = train_learner(cfg, inst, build_dataset(cfg, inst))
        for H in cell.horizons:
            report = evaluate_policy(result.policy, inst, H, cfg.evaluation.m,
                                     derive_rng(cfg.seed, EVAL_STREAM, cell.seed, H),
                                     delta=cfg.evaluation.delta, noise_samples=cfg.evaluation.noise_samples)
            rows.extend(report.rows(n=cell.n, seed=cell.seed))
        return rows


class GamblerPreset(Preset):
    name = "gambler"
    description = "Gambler's-ruin survival probability, clipped error and its closed form"
    overrides = {'construction': {'kind': 'gambler', 'rho': 1.5, 'eps0': 0.01}}
    grid_axes = {'n': [0], 'H': list(range(1, 11)), 'policy_kind': ['gamblers_ruin'], 'chunk_len': [1], 'seed': [0]}
    runs = 100_000

    def run_cell(self, cell: SweepCell, config: BenchConfig) -> List[Dict[str, Any]]:
        cfg = with_overrides(config, {'learner': {'kind': cell.policy_kind, 'chunk_len': 1}})
        inst = build_instance(cfg)
        policy = train_learner(cfg, inst, build_dataset(with_overrides(cfg, {'data': {'n': 0}}), inst)).policy
        rng = derive_rng(cfg.seed, EVAL_STREAM, cell.seed)
        states, _ = rollout_batch(policy, inst, np.full(self.runs, inst.eps0), max(cell.horizons) + 1, rng)
        rows = []
        for t in cell.horizons:
            x = states[t]
            nonzero = MonteCarloEstimate.from_samples((x != 0.0).astype(float))
            clipped = MonteCarloEstimate.from_samples(np.minimum(1.0, np.abs(x)))
            law = 2.0 ** (-t) * min(1.0, (2.0 * inst.rho) ** t * inst.eps0)
            rows.append(make_row(inst.instance_id, cell.policy_kind, cell.n, t, 'nonzero_prob', nonzero.value,
                                 nonzero.stderr, cell.seed))
            rows.append(make_row(inst.instance_id, cell.policy_kind, cell.n, t, 'clipped_error', clipped.value,
                                 clipped.stderr, cell.seed))
            rows.append(make_row(inst.instance_id, cell.policy_kind, cell.n, t, 'clipped_error_law', law, 0.0,
                                 cell.seed))
        return rows


PRESETS: Dict[str, Preset] = {p.name: p for p in (PolicyZooPreset(), TrainingCurvePreset(), RatesPreset(),
                                                  UnstablePreset(), GamblerPreset())}
PRESET_ALIASES: Dict[str, str] = {'policy_zoo': 'figure1', 'training_curve': 'figure2'}


def preset_names() -> List[str]:
    return sorted(PRESETS) + sorted(PRESET_ALIASES)


def get_preset(name: str) -> Preset:
    key = PRESET_ALIASES.get(name, name)
    if key not in PRESETS:
        raise ConfigError(f"Unknown preset '{name}', expected one of {preset_names()}")
    return PRESETS[key]
