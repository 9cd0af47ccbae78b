"""Portable seeded PRNG.

xorshift64* (Vigna 2016) seeded through one round of splitmix64.  Every draw
is defined bit-for-bit, so graphs and data sets are identical across
platforms and across implementations that follow the same recipe:

* ``next_u64``: xorshift64* with shifts (12, 25, 27) and multiplier
  0x2545F4914F6CDD1D.
* ``uniform``: top 53 bits scaled by 2**-53, in [0, 1).
* ``randbelow(k)``: rejection sampling on ``next_u64`` to remove modulo bias.
* ``normal``: Box-Muller, both variates used (cosine first, then sine).
"""

import math

import numpy as np

_MASK = (1 << 64) - 1
_MULT = 0x2545F4914F6CDD1D


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class XorShift64Star:
    def __init__(self, seed):
        state = _splitmix64(int(seed) & _MASK)
        self._state = state if state != 0 else 0x9E3779B97F4A7C15
        self._spare = None

    def next_u64(self):
        x = self._state
        x ^= x >> 12
        x ^= (x << 25) & _MASK
        x ^= x >> 27
        self._state = x
        return (x * _MULT) & _MASK

    def uniform(self):
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randbelow(self, k):
        if k <= 0:
            raise ValueError("randbelow requires k > 0")
        limit = ((1 << 64) // k) * k
        while True:
            v = self.next_u64()
            if v < limit:
                return v % k

    def normal(self):
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = 1.0 - self.uniform()  # (0, 1], keeps log finite
        u2 = self.uniform()
        radius = math.sqrt(-2.0 * math.log(u1))
        self._spare = radius * math.sin(2.0 * math.pi * u2)
        return radius * math.cos(2.0 * math.pi * u2)

    def normal_array(self, shape):
        """Row-major array of standard normal draws."""
        size = int(np.prod(shape))
        return np.array([self.normal() for _ in range(size)], dtype=np.float64).reshape(shape)
