"""Portable seeded random numbers.

Generation must reproduce bit-for-bit across runs and platforms, so the
generator is a small pure-Python SplitMix64 rather than whatever numpy
happens to ship.  Normal deviates use Leva's ratio-of-uniforms method: the
returned value is plain IEEE arithmetic on two uniforms, and ``math.log`` is
only consulted inside a thin acceptance band.
"""

from __future__ import annotations

import math

ALGORITHM = "splitmix64"

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15
_TWO_M53 = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 output finalizer (a bijection on 64-bit integers)."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(master: int, index: int) -> int:
    """Seed for the ``index``-th independent task spawned from ``master``.

    Rule: ``mix64(master XOR index)``.  Used when one master seed has to fan
    out into per-task generators.
    """
    return mix64((master ^ index) & _MASK)


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int = 0):
        self.state = seed & _MASK

    def copy(self) -> "SplitMix64":
        return SplitMix64(self.state)

    def __eq__(self, other):
        return isinstance(other, SplitMix64) and other.state == self.state

    def __repr__(self):
        return f"SplitMix64(state={self.state:#018x})"

    def next_u64(self) -> int:
        self.state = (self.state + _GOLDEN) & _MASK
        return mix64(self.state)

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * _TWO_M53

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        # Leva (1992), constants as in Numerical Recipes 3rd ed. "Normaldev".
        while True:
            u = 1.0 - self.random()  # (0, 1]
            v = 1.7156 * (self.random() - 0.5)
            x = u - 0.449871
            y = abs(v) + 0.386595
            q = x * x + y * (0.19600 * y - 0.25472 * x)
            if q <= 0.27597:
                break
            if q <= 0.27846 and v * v <= -4.0 * math.log(u) * u * u:
                break
        return mu + sigma * v / u
