"""Deterministic seed derivation.

Every stochastic component derives its own seed from the run seed plus
integer tags, so changing one component's draw count never shifts another
component's stream.  numpy's SeedSequence hash is stable across platforms
and versions.
"""

import numpy as np


def derive_seed(*parts: int) -> int:
    """Hash a tuple of non-negative integers into a 64-bit seed."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])


def rng_from(*parts: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*parts))
