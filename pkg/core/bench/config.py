"""
Run configuration.

Defaults live on the models; ``config/default_config.json`` mirrors them.
Values resolve as CLI flags > ``--config`` file > defaults, and the output
root additionally falls back to the COMPBENCH_OUT environment variable.
"""

import itertools
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from core.utils.errors import ConfigError

OUTPUT_ENV = "COMPBENCH_OUT"
DEFAULT_OUT = "runs"

LEARNER_KINDS = (
    "expert", "bc", "mlp", "toy_diffusion", "random_noise", "zero", "gaussian",
    "gamblers_ruin", "concentric", "switching", "history_switching",
)


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class ConstructionConfig(_Section):
    """Which hard instance to build and with what parameters."""
    kind: Literal["stable", "unstable", "gambler"] = "stable"
    target: Literal["bump_packing", "mlp", "zero"] = "bump_packing"
    k: int = Field(2, ge=1)
    s: int = Field(2, ge=1)
    eps: float = Field(0.25, gt=0, le=1)
    d: Optional[int] = Field(None, ge=1)
    mu: float = 0.125
    tau: float = Field(0.1, gt=0)
    delta: float = 0.01
    i: Literal[1, 2] = 1
    omega: Literal[-1, 1] = 1
    rho: float = Field(1.5, gt=0)
    variant: Literal["time_varying", "time_invariant"] = "time_varying"
    xi: Literal[-1, 1] = 1
    eps0: float = Field(0.01, gt=0)
    target_seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_family(self) -> 'ConstructionConfig':
        if not (0.0 < self.mu <= 0.5):
            raise ValueError(f"mu must lie in (0, 1/2], got {self.mu}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.kind == "stable" and self.d is not None and self.d != self.k + 2:
            raise ValueError(f"stable construction needs d = k + 2, got k={self.k}, d={self.d}")
        if self.kind == "unstable":
            if self.rho <= 1.0:
                raise ValueError(f"unstable construction needs rho > 1, got {self.rho}")
            if self.d is not None and self.d < self.k:
                raise ValueError(f"unstable construction needs d >= k, got k={self.k}, d={self.d}")
        return self

    @property
    def state_dim(self) -> int:
        if self.kind == "stable":
            return self.k + 2
        if self.kind == "gambler":
            return 1
        return self.d if self.d is not None else max(self.k, 8)


class DataConfig(_Section):
    n: int = Field(256, ge=0)
    H: int = Field(32, ge=1)
    seed: int = Field(0, ge=0)
    explore_sigma: float = Field(0.0, ge=0)


class LearnerConfig(_Section):
    kind: str = "bc"
    completion: Literal["least_norm", "assume_i", "adversarial"] = "least_norm"
    chunk_len: int = Field(1, ge=1)
    chunk_mode: Literal["plan", "model"] = "plan"
    smoothness: Optional[int] = Field(None, ge=1)
    neighborhood_size: Optional[int] = Field(None, ge=1)
    sigma: float = Field(0.1, ge=0)
    hyperparameters: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check_kind(self) -> 'LearnerConfig':
        if self.kind not in LEARNER_KINDS:
            raise ValueError(f"Unknown learner '{self.kind}', expected one of {LEARNER_KINDS}")
        return self


class EvalConfig(_Section):
    m: int = Field(80, ge=1)
    delta: float = Field(0.1, gt=0, lt=1)
    noise_samples: int = Field(16, ge=1)
    H: Optional[int] = Field(None, ge=1)


class OutputConfig(_Section):
    out: Optional[str] = None

    def root(self) -> Path:
        return Path(self.out or os.environ.get(OUTPUT_ENV) or DEFAULT_OUT)


class BenchConfig(_Section):
    """
    Complete, serializable description of one run.

    Attributes:
        seed: Master seed every generator is derived from
        workers: Worker threads for rollouts and sweeps
        construction: Instance parameters
        data: Demonstration parameters
        learner: Learner selection and hyperparameters
        evaluation: Risk estimation parameters
        output: Output locations
    """
    seed: int = Field(0, ge=0)
    workers: int = Field(1, ge=1)
    construction: ConstructionConfig = Field(default_factory=ConstructionConfig)
    data: DataConfig = Field(default_factory=DataConfig)
    learner: LearnerConfig = Field(default_factory=LearnerConfig)
    evaluation: EvalConfig = Field(default_factory=EvalConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)

    @property
    def eval_H(self) -> int:
        return self.evaluation.H or self.data.H

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json")


class SweepGrid(_Section):
    """
    Axes of a sweep. The Cartesian product is enumerated in sorted order;
    H is carried inside each cell because rollouts are prefix-consistent.
    """
    n: List[int] = Field(default_factory=lambda: [256])
    H: List[int] = Field(default_factory=lambda: [32])
    policy_kind: List[str] = Field(default_factory=lambda: ["bc"])
    chunk_len: List[int] = Field(default_factory=lambda: [1])
    seed: List[int] = Field(default_factory=lambda: [0])
    max_cells: int = Field(4096, ge=1)

    @model_validator(mode="after")
    def _check_size(self) -> 'SweepGrid':
        for name in ("n", "H", "policy_kind", "chunk_len", "seed"):
            if not getattr(self, name):
                raise ValueError(f"Sweep axis '{name}' is empty")
        if min(self.H) < 1 or min(self.chunk_len) < 1 or min(self.n) < 0:
            raise ValueError("Sweep axes need H >= 1, chunk_len >= 1 and n >= 0")
        if self.size > self.max_cells:
            raise ValueError(f"Sweep has {self.size} points, above the cap of {self.max_cells}")
        return self

    @property
    def size(self) -> int:
        return len(self.n) * len(self.H) * len(self.policy_kind) * len(self.chunk_len) * len(self.seed)

    def cells(self) -> List[Tuple[str, int, int, int]]:
        """(policy_kind, chunk_len, n, seed) combinations in sorted order."""
        return sorted(itertools.product(sorted(set(self.policy_kind)), sorted(set(self.chunk_len)),
                                        sorted(set(self.n)), sorted(set(self.seed))))

    @property
    def horizons(self) -> Tuple[int, ...]:
        return tuple(sorted(set(self.H)))


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict):
            current = merged.get(key)
            merged[key] = _deep_merge(current if isinstance(current, dict) else {}, value)
        elif value is not None:
            merged[key] = value
    return merged


def _validation_message(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(p) for p in item.get("loc", ()))
        parts.append(f"{where}: {item.get('msg')}" if where else str(item.get('msg')))
    return "; ".join(parts)


def build_config(data: Dict[str, Any]) -> BenchConfig:
    try:
        return BenchConfig(**data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {_validation_message(e)}")


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> BenchConfig:
    """
    Resolve a run configuration.

    Args:
        path: Optional JSON file with any subset of the fields
        overrides: Nested dict of flag values; None entries are ignored

    Returns:
        BenchConfig: Validated configuration

    Raises:
        FileNotFoundError: If ``path`` does not exist
        ConfigError: If the merged values do not validate
    """
    data: Dict[str, Any] = {}
    if path:
        target = Path(path)
        if not target.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        try:
            with open(target, "r", encoding="utf-8") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Config file '{path}' is not valid JSON: {str(e)}")
        if not isinstance(data, dict):
            raise ConfigError(f"Config file '{path}' must hold a JSON object")
    return build_config(_deep_merge(data, overrides or {}))


def build_grid(data: Dict[str, Any]) -> SweepGrid:
    try:
        return SweepGrid(**data)
    except ValidationError as e:
        raise ConfigError(f"Invalid sweep grid: {_validation_message(e)}")


def with_overrides(config: BenchConfig, overrides: Dict[str, Any]) -> BenchConfig:
    """Validated copy of ``config`` with nested ``overrides`` applied."""
    return build_config(_deep_merge(config.to_dict(), overrides))
