"""Counter-based random substreams.

Every random draw in a simulation comes from a Philox generator keyed by
(experiment seed, purpose tag, coordinates such as round and node).  A
substream is fully determined by its key, so workers can consume their
streams in any order, on any number of threads, and reproduce identical
draws.
"""

import numpy as np

_MASK = (1 << 64) - 1

# purpose tags, arbitrary distinct constants
PROBLEM = 0x7A11
CONTAMINATE = 0x7A12
SHARD = 0x7A13
EPOCH = 0x7A14
PARTICIPATION = 0x7A15
SWEEP = 0x7A16


def _mix(h, v):
    """One splitmix64 absorption step (all arithmetic mod 2^64)."""
    h = (h + 0x9E3779B97F4A7C15 + (v & _MASK)) & _MASK
    h ^= h >> 30
    h = (h * 0xBF58476D1CE4E5B9) & _MASK
    h ^= h >> 27
    h = (h * 0x94D049BB133111EB) & _MASK
    h ^= h >> 31
    return h


def substream(seed, *path):
    """Return a fresh Generator for (seed, *path).

    Identical arguments give an identical stream; any differing component
    gives a statistically independent one.
    """
    h = _mix(0, len(path))
    for part in path:
        h = _mix(h, int(part))
    key = np.array([seed & _MASK, h], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed, *path):
    """Fold (seed, *path) into a new 63-bit seed, e.g. for sweep assignments."""
    h = _mix(seed & _MASK, len(path))
    for part in path:
        h = _mix(h, int(part))
    return h >> 1
