"""Portable counter-based random numbers.

Every random draw in the package goes through :class:`SplitMix64` so that
seeded results are identical on every platform and numpy version.

Algorithm
---------
The generator keeps a 64-bit ``seed`` and a 64-bit ``counter``. Draw ``i``
returns ``mix(seed + (counter + i + 1) * 0x9E3779B97F4A7C15)`` where ``mix``
is the splitmix64 finalizer::

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

all arithmetic modulo 2**64. Doubles take the top 53 bits. Normals use the
Box-Muller transform on consecutive pairs of doubles. Child streams are
derived by mixing the parent seed with a 64-bit key.
"""

from __future__ import annotations

import zlib

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix64(value: int) -> int:
    """splitmix64 finalizer on a Python int."""
    return int(_mix(np.array([value & _MASK], dtype=np.uint64))[0])


def key_of(label: str) -> int:
    """Stable 64-bit key for a string label (crc32 spread by mix64)."""
    return mix64(zlib.crc32(label.encode("utf-8")))


class SplitMix64:
    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self.counter = 0

    def spawn(self, key) -> "SplitMix64":
        """Independent child stream; ``key`` may be an int or a string."""
        if isinstance(key, str):
            key = key_of(key)
        return SplitMix64(mix64(self.seed ^ mix64(int(key) & _MASK)))

    def raw(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        return _mix(np.uint64(self.seed) + idx * _GOLDEN)

    def random(self, n: int) -> np.ndarray:
        """``n`` doubles uniform on [0, 1)."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def uniform(self, low: float, high: float, n: int) -> np.ndarray:
        return low + (high - low) * self.random(n)

    def normal(self, n: int, scale: float = 1.0) -> np.ndarray:
        m = (n + 1) // 2
        u = self.random(2 * m)
        u1 = 1.0 - u[:m]  # (0, 1]
        u2 = u[m:]
        r = np.sqrt(-2.0 * np.log(u1))
        out = np.empty(2 * m)
        out[:m] = r * np.cos(2.0 * np.pi * u2)
        out[m:] = r * np.sin(2.0 * np.pi * u2)
        return scale * out[:n]

    def integers(self, high: int, n: int) -> np.ndarray:
        """``n`` integers uniform on [0, high)."""
        return np.minimum((self.random(n) * high).astype(np.int64), high - 1)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.random(n), kind="stable")
