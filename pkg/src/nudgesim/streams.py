"""Deterministic random streams.

Every stochastic draw in a simulation comes from a generator keyed by the
master seed plus a small tuple of integers (purpose, user index, day, ...).
Streams never depend on evaluation order, so users can be simulated in any
order, or in parallel, and produce the same output.
"""

import numpy as np

POPULATION = 0
USER_DAY = 1
POLICY = 2
FUZZ = 3


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return a fresh PCG64 generator for ``(seed, *keys)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), *map(int, keys)])))


def user_day_stream(seed: int, user_index: int, day: int) -> np.random.Generator:
    return stream(seed, USER_DAY, user_index, day)


def policy_stream(seed: int, day: int) -> np.random.Generator:
    return stream(seed, POLICY, day)
