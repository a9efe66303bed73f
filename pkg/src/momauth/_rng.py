"""Keyed, counter-based random streams.

Every random draw in the package comes from a Philox generator whose key is
derived from ``(global_seed, domain, *indices)``.  Two calls with the same key
see the same numbers no matter which process or in what order they run.
"""

import numpy as np

# domain tags, part of the key so streams for different purposes never overlap
CHIP = 1
NOISE = 2
ADC = 3
LER = 4
MC = 5
SWEEP = 6


def stream(global_seed, domain, *indices):
    """Return a fresh Generator for the key ``(global_seed, domain, *indices)``."""
    if global_seed < 0:
        raise ValueError(f"global_seed must be non-negative, got {global_seed}")
    key = tuple(int(i) for i in (domain, *indices))
    if any(i < 0 for i in key):
        raise ValueError(f"stream indices must be non-negative, got {key}")
    ss = np.random.SeedSequence(entropy=int(global_seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))
