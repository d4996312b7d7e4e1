"""Frozen numeric constants shared by every construction.

The values live in ``config/constants.json`` so a run can be replayed with
exactly the constants it was produced with.
"""

import json
from functools import lru_cache
from pathlib import Path
from typing import Dict, Optional

from pydantic import BaseModel, Field, ValidationError

from core.utils.errors import ConfigError

PROJECT_ROOT = Path(__file__).resolve().parents[2]
CONSTANTS_PATH = PROJECT_ROOT / "config" / "constants.json"


class Constants(BaseModel):
    c_cost: float = Field(1.0 / 16.0, gt=0)
    c_delta: float = Field(1.0, gt=0)
    tiv_cost_scale: float = Field(1.0, gt=0)
    stability_margin: float = Field(0.01, gt=0)
    level_max: int = Field(30, ge=1)
    packing_budget_factor: int = Field(64, ge=1)
    blowup_norm: float = Field(1e6, gt=0)
    control_max_iter: int = Field(200, ge=1)
    control_gain_bound: float = Field(4.0, gt=0)
    eiiss_initial_gap: float = Field(0.1, gt=0)
    eiiss_input_gap: float = Field(0.05, gt=0)
    eiiss_input_scale: float = Field(0.05, ge=0)
    eiiss_safety: float = Field(2.0, ge=1)
    eiiss_tolerance: float = Field(1e-6, ge=0)
    noise_samples: int = Field(16, ge=1)
    bump_derivative_bounds: Dict[str, float] = Field(default_factory=dict)


@lru_cache(maxsize=None)
def load_constants(path: Optional[str] = None) -> Constants:
    """
    Load the frozen constants file.

    Args:
        path: Optional alternative JSON file; defaults to config/constants.json

    Returns:
        Constants: Validated constants (code defaults when the file is absent)

    Raises:
        ConfigError: If the file exists but does not validate
    """
    target = Path(path) if path else CONSTANTS_PATH
    if not target.exists():
        return Constants()
    try:
        with open(target, "r", encoding="utf-8") as f:
            return Constants(**json.load(f))
    except (ValidationError, json.JSONDecodeError) as e:
        raise ConfigError(f"Invalid constants file '{target}': {str(e)}")
