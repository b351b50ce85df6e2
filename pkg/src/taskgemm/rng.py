"""Per-procedure deterministic random streams.

Generator: xoshiro256** (Blackman & Vigna). A stream for ``(global_seed,
procedure_index)`` is keyed by

    key = mix64(mix64(global_seed) ^ mix64(procedure_index ^ 0xD1B54A32D192ED03))

where ``mix64`` is the splitmix64 finalizer, and the four state words are the
first four splitmix64 outputs starting from ``key``. Streams are owned by a
single procedure and never shared between threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import PreconditionError

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_INDEX_SALT = 0xD1B54A32D192ED03

_U5 = np.uint64(5)
_U7 = np.uint64(7)
_U9 = np.uint64(9)
_U11 = np.uint64(11)
_U17 = np.uint64(17)
_U45 = np.uint64(45)
_U57 = np.uint64(57)
_U19 = np.uint64(19)
_U0 = np.uint64(0)
_TWO_PI = 2.0 * math.pi
_INV_2_53 = 1.0 / 9007199254740992.0


def mix64(x):
    """splitmix64 finalizer: a bijective 64-bit avalanche mix."""
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def _splitmix64_words(key, count):
    words = []
    x = key
    for _ in range(count):
        x = (x + _GOLDEN) & _MASK
        words.append(mix64(x))
    return words


@dataclass(frozen=True)
class StreamSeed:
    global_seed: int
    procedure_index: int

    def __post_init__(self):
        if not 0 <= self.global_seed <= _MASK:
            raise PreconditionError(f"global_seed must fit in uint64, got {self.global_seed}")
        if self.procedure_index < 0:
            raise PreconditionError(f"procedure_index must be >= 0, got {self.procedure_index}")


@njit(nogil=True, cache=True)
def _next(s):
    s0 = s[0]
    s1 = s[1]
    s2 = s[2]
    s3 = s[3]
    x = s1 * _U5
    result = ((x << _U7) | (x >> _U57)) * _U9
    t = s1 << _U17
    s2 ^= s0
    s3 ^= s1
    s1 ^= s2
    s0 ^= s3
    s2 ^= t
    s3 = (s3 << _U45) | (s3 >> _U19)
    s[0] = s0
    s[1] = s1
    s[2] = s2
    s[3] = s3
    return result


@njit(nogil=True, cache=True)
def _uniform01(s):
    return np.float64(_next(s) >> _U11) * _INV_2_53


@njit(nogil=True, cache=True)
def _uniform_index(s, n):
    # reject draws at or above the largest multiple of n that fits in 2**64
    un = np.uint64(n)
    rem = (np.uint64(0xFFFFFFFFFFFFFFFF) % un + np.uint64(1)) % un
    while True:
        x = _next(s)
        if rem == _U0 or x < _U0 - rem:
            return np.int64(x % un)


@njit(nogil=True, cache=True)
def _normal_pair(s):
    u1 = 1.0 - _uniform01(s)  # (0, 1]
    u2 = _uniform01(s)
    r = math.sqrt(-2.0 * math.log(u1))
    return r * math.cos(_TWO_PI * u2), r * math.sin(_TWO_PI * u2)


@njit(nogil=True, cache=True)
def _fill_normals(s, out):
    n = out.shape[0]
    i = 0
    while i + 1 < n:
        a, b = _normal_pair(s)
        out[i] = a
        out[i + 1] = b
        i += 2
    if i < n:
        a, _ = _normal_pair(s)
        out[i] = a


@njit(nogil=True, cache=True)
def _fill_uniform(s, out):
    for i in range(out.shape[0]):
        out[i] = _uniform01(s)


class RandomStream:
    """A xoshiro256** generator with the draws the simulation needs."""

    __slots__ = ("_s",)

    def __init__(self, words):
        s = np.array([w & _MASK for w in words], dtype=np.uint64)
        if s.shape != (4,) or not s.any():
            raise PreconditionError("xoshiro256** needs four words, not all zero")
        self._s = s

    def next_u64(self):
        return int(_next(self._s))

    def uniform01(self):
        """Uniform double in [0, 1) with 53 random bits."""
        return float(_uniform01(self._s))

    def uniform_index(self, n):
        """Unbiased integer in [0, n)."""
        if n < 1:
            raise PreconditionError(f"uniform_index needs n >= 1, got {n}")
        return int(_uniform_index(self._s, n))

    def standard_normal_pair(self):
        """Two independent N(0, 1) draws by the Box-Muller transform."""
        a, b = _normal_pair(self._s)
        return float(a), float(b)

    def standard_normals(self, count):
        """``count`` N(0, 1) draws, consuming Box-Muller pairs in order."""
        out = np.empty(count)
        _fill_normals(self._s, out)
        return out

    def uniforms(self, count):
        out = np.empty(count)
        _fill_uniform(self._s, out)
        return out

    def state(self):
        return tuple(int(w) for w in self._s)


def derive_stream(seed):
    """Deterministic stream for one Monte Carlo procedure."""
    key = mix64(mix64(seed.global_seed) ^ mix64(seed.procedure_index ^ _INDEX_SALT))
    return RandomStream(_splitmix64_words(key, 4))


def stream_for(global_seed, procedure_index):
    return derive_stream(StreamSeed(global_seed, procedure_index))
