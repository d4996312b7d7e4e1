"""
Deterministic JSON and CSV writers.

Files are written with sorted keys and fixed float formatting so two runs
from the same (config, seed) produce byte-identical outputs.
"""

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np

from core.instances.base import Instance
from core.instances.registry import instance_from_dict
from core.models.trajectory import Dataset
from core.policies.base import Policy
from core.policies.registry import policy_from_dict

CSV_COLUMNS = ("instance_id", "policy_kind", "n", "H", "metric", "value", "stderr", "seed", "status", "step")


def _default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def dumps(data: Any) -> str:
    return json.dumps(data, sort_keys=True, indent=2, default=_default) + "\n"


def write_json(path: Path, data: Any) -> Path:
    """Write ``data`` atomically (temp file then rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(data))
    tmp.replace(path)
    return path


def read_json(path: Path) -> Any:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: Path, rows: Iterable[Dict[str, Any]], columns: Sequence[str] = CSV_COLUMNS) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns), extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({c: _format(row.get(c)) for c in columns})
    return path


def read_csv(path: Path) -> List[Dict[str, str]]:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_instance(path: Path, inst: Instance, config: Optional[Dict[str, Any]] = None) -> Path:
    return write_json(path, {'instance': inst.to_dict(), 'instance_id': inst.instance_id, 'config': config or {}})


def load_instance(path: Path) -> Instance:
    data = read_json(path)
    return instance_from_dict(data['instance'] if 'instance' in data else data)


def save_dataset(path: Path, dataset: Dataset, config: Optional[Dict[str, Any]] = None) -> Path:
    return write_json(path, {'dataset': dataset.to_dict(), 'config': config or {}})


def load_dataset(path: Path) -> Dataset:
    data = read_json(path)
    return Dataset.from_dict(data['dataset'] if 'dataset' in data else data)


def save_policy(path: Path, policy: Policy, config: Optional[Dict[str, Any]] = None) -> Path:
    return write_json(path, {'policy': policy.to_dict(), 'config': config or {}})


def load_policy(path: Path, inst: Optional[Instance] = None) -> Policy:
    data = read_json(path)
    return policy_from_dict(data['policy'] if 'policy' in data else data, inst=inst)
