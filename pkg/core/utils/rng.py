from typing import Sequence, Union

import numpy as np

SeedLike = Union[int, Sequence[int]]


def derive_rng(base: int, *keys: int) -> np.random.Generator:
    """Generator keyed statelessly by ``(base, *keys)``.

    Two calls with the same key always produce the same stream, whatever
    order or thread they run in.
    """
    return np.random.default_rng([int(base), *[int(k) for k in keys]])


def draw_seed(rng: np.random.Generator) -> int:
    """Draw a non-negative 63-bit seed from ``rng``."""
    return int(rng.integers(0, 2**63 - 1))
