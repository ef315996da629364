"""Counter-based random streams.

Every draw is a pure function of ``(seed, user, purpose, counter)``,
so the value of a draw never depends on how many draws were made before it
or in which order lanes are evaluated. The mixer is SplitMix64's finalizer
applied to each key word in turn; all arithmetic is vectorized over numpy
``uint64`` arrays and broadcasts like any ufunc.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

import numpy as np

ENERGY = "energy"
SCHEDULE = "schedule"
DATA = "data"

_MASK = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TO_UNIT = 2.0**-53
_S11, _S27, _S30, _S31 = (np.uint64(k) for k in (11, 27, 30, 31))


@lru_cache(maxsize=None)
def purpose_code(purpose: str) -> int:
    digest = hashlib.sha256(purpose.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def _words(value) -> np.ndarray:
    if isinstance(value, (int, np.integer)):
        return np.array(int(value) & _MASK, dtype=np.uint64)
    arr = np.asarray(value)
    if arr.dtype.kind not in "iu":
        raise TypeError(f"stream keys must be integers, got {arr.dtype}")
    if arr.dtype.kind == "i":
        return arr.astype(np.int64).view(np.uint64)
    return arr.astype(np.uint64, copy=False)


def _mix(z: np.ndarray) -> np.ndarray:
    # 1-d arrays only: uint64 array arithmetic wraps silently, scalars would warn.
    z = z ^ (z >> _S30)
    z *= _M1
    z ^= z >> _S27
    z *= _M2
    z ^= z >> _S31
    return z


def hash_key(*words) -> np.ndarray:
    """Mix integer key words (scalars or broadcastable arrays) into uint64."""
    arrays = [_words(w) for w in words]
    shape = np.broadcast_shapes(*(a.shape for a in arrays))
    h = np.zeros(int(np.prod(shape)), dtype=np.uint64)
    for a in arrays:
        h ^= np.broadcast_to(a, shape).reshape(-1)
        h += _GOLDEN
        h = _mix(h)
    return h.reshape(shape)


def uniform(seed, user, purpose: str, counter) -> np.ndarray:
    """Uniform draw on [0, 1) with 53 bits of resolution."""
    h = hash_key(seed, user, purpose_code(purpose), counter)
    return (h >> _S11).astype(np.float64) * _TO_UNIT


def integers(n, seed, user, purpose: str, counter) -> np.ndarray:
    """Uniform integer on {0, ..., n-1}; ``n`` may be an array (all entries >= 1)."""
    return scale_to_int(uniform(seed, user, purpose, counter), n)


def scale_to_int(u, n) -> np.ndarray:
    """Map uniforms on [0, 1) to integers on {0, ..., n-1}."""
    n = np.asarray(n, dtype=np.int64)
    return np.minimum(np.floor(u * n).astype(np.int64), n - 1)


def derive_seed(seed, *labels) -> np.ndarray:
    """Child seed(s) for replays, batch members and similar fan-outs."""
    return hash_key(seed, *labels)


def generator(seed: int, purpose: str) -> np.random.Generator:
    """A bulk numpy Generator (Philox, itself counter-based) keyed by seed and purpose."""
    key = int(hash_key(seed, purpose_code(purpose)))
    return np.random.Generator(np.random.Philox(key=key))
