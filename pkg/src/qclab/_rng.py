"""Counter-based random numbers keyed on integer tuples.

Every random draw in the library is a pure function of (seed, key...),
so fields and colorings are reproducible bit-for-bit, independent of
evaluation order, and extendable to larger windows without resampling.
The mixer is the splitmix64 finalizer chain; doubles take the top 53 bits.
"""
from __future__ import annotations

import numpy as np

_C0 = np.uint64(0x9E3779B97F4A7C15)
_C1 = np.uint64(0xBF58476D1CE4E5B9)
_C2 = np.uint64(0x94D049BB133111EB)
_INV53 = float(2.0**-53)


def _mix(x):
    # uint64 arithmetic wraps by design
    with np.errstate(over="ignore"):
        x = x + _C0
        x = (x ^ (x >> np.uint64(30))) * _C1
        x = (x ^ (x >> np.uint64(27))) * _C2
        return x ^ (x >> np.uint64(31))


def _as_u64(k):
    # negative lattice indices map via two's complement
    return np.asarray(k, dtype=np.int64).astype(np.uint64)


def counter_hash(seed, *keys):
    """64-bit hash of (seed, keys...); keys broadcast like numpy arrays."""
    h = _mix(_as_u64(seed))
    for k in keys:
        h = _mix(h ^ _as_u64(k))
    return h


def counter_uniform(seed, *keys):
    """Uniform draw in [0, 1) keyed by (seed, keys...). Vectorized."""
    h = counter_hash(seed, *keys)
    u = (h >> np.uint64(11)).astype(np.float64) * _INV53
    if u.ndim == 0:
        return float(u)
    return u
