"""Counter-based random numbers.

Every draw is a pure function of ``(seed, *counters)``, so a batch of episodes
produces the same numbers whether it is generated in one call, in slices, or
by several workers. The mixer is the SplitMix64 finalizer applied to a chain
of keys.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = z + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _as_u64(x) -> np.ndarray:
    if isinstance(x, (int, np.integer)):
        return np.asarray(int(x) & _MASK64, dtype=np.uint64)
    return np.asarray(x).astype(np.int64).astype(np.uint64)


def hash_keys(seed: int, *counters) -> np.ndarray:
    """64-bit hash of ``seed`` and an arbitrary chain of (broadcastable) counters."""
    with np.errstate(over="ignore"):
        z = _mix(_as_u64(seed))
        for c in counters:
            z = _mix(z ^ _as_u64(c))
    return z


def uniform(seed: int, *counters) -> np.ndarray:
    """Uniform floats in [0, 1) keyed by ``(seed, *counters)``; 53 bits of resolution."""
    z = hash_keys(seed, *counters)
    return (z >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def derive_seed(seed: int, *counters) -> int:
    """Child seed for a sub-stream, e.g. ``derive_seed(base, cell, rep)``."""
    return int(hash_keys(seed, *counters))


def categorical(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF sampling: ``cdf`` has the category axis last, ``u`` matches the leading shape."""
    idx = (u[..., None] >= cdf).sum(axis=-1)
    return np.minimum(idx, cdf.shape[-1] - 1)
