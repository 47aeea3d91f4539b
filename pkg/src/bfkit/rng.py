"""Seed-stream derivation for reproducible parallel replicas.

The simulation kernels run their own splitmix64 generator (see _kernels),
which is splittable: every (master_seed, index) pair maps to a decorrelated
64-bit stream state, so replica results do not depend on thread scheduling.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(x: int) -> int:
    # splitmix64 output function (Steele/Lea/Flood variant)
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return (x ^ (x >> 31)) & _MASK


def derive_stream(master_seed: int, index: int) -> int:
    """64-bit generator state for sub-stream `index` of `master_seed`."""
    h = _mix64((master_seed & _MASK) + _GOLDEN)
    return _mix64(h ^ ((index + 1) * _GOLDEN))


def as_uint64(seed: int) -> np.uint64:
    return np.uint64(seed & _MASK)
