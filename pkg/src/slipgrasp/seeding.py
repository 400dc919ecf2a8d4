"""Deterministic RNG derivation.

All stochastic code in the package takes either an integer seed or a
`numpy.random.Generator`. Workers never share generator state: child streams
are derived from a master seed and an index path via `SeedSequence`, so
episode i of run (seed s) is reproducible regardless of generation order or
parallelism.

Splitting rule: ``child_rng(master, *path)`` seeds a fresh generator with
``SeedSequence([master, *path])``. The same (master, path) always yields the
same stream; distinct paths yield statistically independent streams.
"""

import numpy as np


def child_rng(master_seed: int, *path: int) -> np.random.Generator:
    """Independent generator for the worker identified by ``path``."""
    return np.random.default_rng(np.random.SeedSequence([int(master_seed), *map(int, path)]))


def as_rng(seed_or_rng) -> np.random.Generator:
    """Coerce an int seed or existing Generator into a Generator."""
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)
