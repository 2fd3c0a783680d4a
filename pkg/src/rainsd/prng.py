"""Seeded SplitMix64 generator and seed derivation.

SplitMix64 keeps a 64-bit counter that advances by the golden-ratio constant
and passes each counter value through an xorshift-multiply finalizer. Output
``j`` (0-based) of a stream seeded with ``s`` is ``mix(s + (j + 1) * GOLDEN)``,
so a stream can be generated in bulk with numpy and resumed at any offset.

Stream splitting: a child stream for key ``k`` is seeded with
``mix(parent_seed ^ fnv1a64(k))``. Keys are UTF-8 strings such as parameter
names or relative output paths, which makes derived seeds independent of
processing order.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def fnv1a64(data) -> int:
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & MASK64
    return h


def derive_seed(master: int, key) -> int:
    """Seed for the child stream named ``key``."""
    return mix64((master & MASK64) ^ fnv1a64(key))


def _mix_array(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


class SplitMix64:
    def __init__(self, seed: int):
        if seed < 0 or seed > MASK64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.state = seed

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN) & MASK64
        return mix64(self.state)

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def below(self, n: int) -> int:
        """Integer in [0, n). Uses floor(uniform * n); bias is < 2**-53 * n."""
        if n <= 0:
            raise ValueError("n must be positive")
        return int(self.uniform() * n)

    def integers(self, lo: int, hi: int) -> int:
        """Integer in the closed range [lo, hi]."""
        return lo + self.below(hi - lo + 1)

    def u64_block(self, n: int) -> np.ndarray:
        """The next ``n`` outputs as a uint64 array; same values as next_u64."""
        with np.errstate(over="ignore"):
            steps = np.arange(1, n + 1, dtype=np.uint64) * np.uint64(GOLDEN)
            z = steps + np.uint64(self.state)
            out = _mix_array(z)
        self.state = (self.state + n * GOLDEN) & MASK64
        return out

    def uniform_block(self, n: int) -> np.ndarray:
        return (self.u64_block(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))

    def normal_block(self, n: int) -> np.ndarray:
        """Standard normals by Box-Muller; consumes 2 * ceil(n / 2) outputs."""
        m = (n + 1) // 2
        u = self.uniform_block(2 * m)
        u1 = 1.0 - u[0::2]  # (0, 1], keeps log finite
        u2 = u[1::2]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])
        # interleave so the first n values do not depend on n's parity
        out = np.empty(2 * m)
        out[0::2] = z[:m]
        out[1::2] = z[m:]
        return out[:n]
