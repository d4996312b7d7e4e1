from typing import Any, Dict

from core.instances.base import Instance
from core.instances.gambler import GamblerSystem
from core.instances.stable import StableInstance
from core.instances.unstable import UnstableInstance

_KINDS = {
    StableInstance.kind: StableInstance,
    UnstableInstance.kind: UnstableInstance,
    GamblerSystem.kind: GamblerSystem,
}


def instance_from_dict(data: Dict[str, Any]) -> Instance:
    """Rebuild any instance from its ``to_dict`` payload."""
    kind = data.get('kind')
    if kind not in _KINDS:
        raise ValueError(f"Unknown instance kind '{kind}'")
    return _KINDS[kind].from_dict(data)
