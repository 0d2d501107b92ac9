"""Counter-based random numbers.

Every draw is a pure function of a 64-bit stream key and a 64-bit counter, so
values never depend on evaluation order. The mixing function is the SplitMix64
finalizer; ``uniforms(key, c)`` is exactly output number ``c + 1`` of a
SplitMix64 generator started from state ``key``.
"""

import numpy as np

GOLDEN_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_COORD_BITS = 21
_COORD_LIMIT = 1 << (_COORD_BITS - 1)


def mix64(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed: int, *words: int) -> int:
    """Derive a stream key from a master seed and non-negative integer words."""
    if seed < 0 or any(w < 0 for w in words):
        raise ValueError("seed and stream words must be non-negative")
    ss = np.random.SeedSequence([int(seed), *map(int, words)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def raw64(key: int, counters) -> np.ndarray:
    counters = np.asarray(counters, dtype=np.uint64)
    with np.errstate(over="ignore"):
        state = np.uint64(key) + (counters + np.uint64(1)) * GOLDEN_GAMMA
    return mix64(state)


def uniforms(key: int, counters) -> np.ndarray:
    """Doubles in [0, 1) with 53 random bits each."""
    return (raw64(key, counters) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def site_codes(sites) -> np.ndarray:
    """Injective map from integer lattice points (|j_k| < 2**20, d <= 3) to counters."""
    sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
    if sites.shape[1] > 3:
        raise ValueError("site codes support at most 3 dimensions")
    if np.any(np.abs(sites) >= _COORD_LIMIT):
        raise ValueError(f"lattice coordinates must satisfy |j| < {_COORD_LIMIT}")
    zz = np.where(sites >= 0, 2 * sites, -2 * sites - 1).astype(np.uint64)
    code = np.zeros(sites.shape[0], dtype=np.uint64)
    for k in range(sites.shape[1]):
        code |= zz[:, k] << np.uint64(_COORD_BITS * k)
    return code
