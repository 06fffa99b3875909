"""xoshiro256** seeded through splitmix64.

The stream is fixed by the algorithm alone, so any implementation of the
same two generators reproduces it exactly.  Doubles take the top 53 bits.
"""

from __future__ import annotations

import numba
import numpy as np

_MASK64 = (1 << 64) - 1
_TWO_PI = 6.283185307179586


def splitmix64(state: int) -> tuple[int, int]:
    """One splitmix64 step: returns ``(new_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


@numba.njit(cache=True)
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@numba.njit(cache=True)
def _next(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@numba.njit(cache=True)
def _fill_u64(s, out):
    for i in range(out.size):
        out[i] = _next(s)


@numba.njit(cache=True)
def _fill_double(s, out):
    for i in range(out.size):
        out[i] = (_next(s) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(cache=True)
def _bounded(s, bound):
    # mask-and-reject: unbiased and simple to reproduce elsewhere
    mask = np.uint64(1)
    while mask < bound:
        mask = (mask << np.uint64(1)) | np.uint64(1)
    while True:
        v = _next(s) & mask
        if v < bound:
            return v


@numba.njit(cache=True)
def _fill_bounded(s, bound, out):
    for i in range(out.size):
        out[i] = _bounded(s, np.uint64(bound))


@numba.njit(cache=True)
def _shuffle(s, arr):
    for i in range(arr.size - 1, 0, -1):
        j = _bounded(s, np.uint64(i + 1))
        tmp = arr[i]
        arr[i] = arr[j]
        arr[j] = tmp


class Xoshiro256:
    """xoshiro256** generator.

    >>> Xoshiro256.from_state([1, 2, 3, 4]).next_u64()
    11520
    """

    def __init__(self, seed: int = 0):
        seed = int(seed) & _MASK64
        words = []
        for _ in range(4):
            seed, out = splitmix64(seed)
            words.append(out)
        self._s = np.array(words, dtype=np.uint64)

    @classmethod
    def from_state(cls, state) -> "Xoshiro256":
        words = [int(w) & _MASK64 for w in state]
        if len(words) != 4 or not any(words):
            raise ValueError("state must be four 64-bit words, not all zero")
        gen = cls.__new__(cls)
        gen._s = np.array(words, dtype=np.uint64)
        return gen

    @property
    def state(self) -> tuple[int, ...]:
        return tuple(int(w) for w in self._s)

    def next_u64(self) -> int:
        return int(_next(self._s))

    def u64(self, size: int) -> np.ndarray:
        out = np.empty(int(size), dtype=np.uint64)
        _fill_u64(self._s, out)
        return out

    def random(self, size=None):
        """Uniform doubles in [0, 1)."""
        if size is None:
            return float(self.random(1)[0])
        out = np.empty(size, dtype=np.float64)
        _fill_double(self._s, out.reshape(-1))
        return out

    def uniform(self, low=0.0, high=1.0, size=None):
        return low + (high - low) * self.random(size)

    def standard_normal(self, size):
        """Box-Muller pairs ``(r cos, r sin)`` from two uniforms each, in stream order."""
        size = tuple(np.atleast_1d(size)) if not np.isscalar(size) else (int(size),)
        count = int(np.prod(size))
        u = self.random(2 * ((count + 1) // 2)).reshape(-1, 2)
        r = np.sqrt(-2.0 * np.log1p(-u[:, 0]))
        theta = _TWO_PI * u[:, 1]
        z = np.empty((u.shape[0], 2))
        z[:, 0] = r * np.cos(theta)
        z[:, 1] = r * np.sin(theta)
        return z.reshape(-1)[:count].reshape(size)

    def integers(self, bound: int, size=None):
        """Uniform integers in ``[0, bound)``."""
        if bound < 1:
            raise ValueError("bound must be >= 1")
        if size is None:
            return int(_bounded(self._s, np.uint64(bound)))
        out = np.empty(size, dtype=np.uint64)
        _fill_bounded(self._s, bound, out.reshape(-1))
        return out.astype(np.int64)

    def permutation(self, n: int) -> np.ndarray:
        arr = np.arange(int(n), dtype=np.int64)
        _shuffle(self._s, arr)
        return arr
