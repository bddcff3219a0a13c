"""Reproducible per-trial random streams.

Trial ``i`` of an experiment with master seed ``s`` draws from a PCG64
generator seeded with ``trial_seed(s, i)``::

    z = (s + (i + 1) * 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    trial_seed = z ^ (z >> 31)

which is the SplitMix64 output function applied to the ``i + 1``-th
element of the SplitMix64 sequence started at ``s``.  Because each trial's
stream depends only on ``(s, i)``, results do not depend on how trials are
split between workers.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

DEFAULT_SEED = 0xD1CE


def splitmix64(z: int) -> int:
    """SplitMix64 finalizer (avalanche) on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(master_seed: int, index: int) -> int:
    if index < 0:
        raise ValueError("trial index must be nonnegative")
    return splitmix64((master_seed & MASK64) + (index + 1) * GOLDEN_GAMMA)


def trial_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(trial_seed(master_seed, index)))


def derived_rng(master_seed: int, *labels: int) -> np.random.Generator:
    """Generator for auxiliary draws (graph construction, re-perturbation).

    Labels are folded in one at a time so streams for different purposes
    never coincide with per-trial streams of the same master seed.
    """
    z = splitmix64(master_seed ^ 0xA5A5A5A5A5A5A5A5)
    for label in labels:
        z = splitmix64(z + (label + 1) * GOLDEN_GAMMA)
    return np.random.Generator(np.random.PCG64(z))
