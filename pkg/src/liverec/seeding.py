"""Named random streams derived from a single user-facing seed.

Every consumer (data generation, parameter init, batch shuffling, dropout)
draws from its own stream so adding draws to one consumer never perturbs
the others.  Stream tags are fixed constants; changing them breaks
reproducibility of existing runs.
"""
from __future__ import annotations

import numpy as np

_STREAM_TAGS = {
    "data": 0,
    "init": 1,
    "shuffle": 2,
    "dropout": 3,
}


def stream_rng(seed: int, name: str) -> np.random.Generator:
    """Return the generator for one named stream of `seed`."""
    try:
        tag = _STREAM_TAGS[name]
    except KeyError:
        raise ValueError(f"unknown random stream {name!r}") from None
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, tag]))
