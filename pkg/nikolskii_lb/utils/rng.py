"""Deterministic random streams for reproducible simulations.

Every stochastic routine takes a seed; independent jobs derive their own
stream from (seed, key, ...) so results do not depend on execution order.
"""

from typing import Union

import numpy as np

from nikolskii_lb.core.errors import ParameterError
from nikolskii_lb.utils.validation import validate_seed

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator]


def make_rng(seed: SeedLike) -> np.random.Generator:
    """Generator for a seed; an existing Generator is passed through."""
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    if not validate_seed(seed):
        raise ParameterError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return np.random.default_rng(seed)


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Stream of the job identified by `keys` in the family keyed by `seed`."""
    if not validate_seed(seed):
        raise ParameterError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    if any(k < 0 for k in keys):
        raise ParameterError("stream keys must be nonnegative")
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=tuple(keys)))
