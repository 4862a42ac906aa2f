"""Deterministic, platform-independent random number generation.

Sampling uses xoshiro256** seeded through splitmix64. Bulk parameter
initialisation uses the splitmix64 counter stream directly, which is
vectorisable with numpy and produces the same bits everywhere.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def check_seed(seed: int) -> int:
    if not isinstance(seed, (int, np.integer)) or isinstance(seed, bool):
        raise TypeError(f"seed must be an integer, got {type(seed).__name__}")
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    return seed


def splitmix64(state: int) -> tuple[int, int]:
    """Advance a splitmix64 state; returns ``(new_state, output)``."""
    state = (state + GOLDEN) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return state, z ^ (z >> 31)


def splitmix64_stream(seed: int, n: int) -> np.ndarray:
    """First ``n`` splitmix64 outputs for ``seed`` as a uint64 array."""
    seed = check_seed(seed)
    i = np.arange(1, n + 1, dtype=np.uint64)
    z = np.uint64(seed) + i * np.uint64(GOLDEN)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def uniform_array(seed: int, shape: tuple[int, ...], low: float, high: float) -> np.ndarray:
    """Uniform floats in ``[low, high)`` from the splitmix64 stream, row-major."""
    n = int(np.prod(shape))
    bits = splitmix64_stream(seed, n) >> np.uint64(11)
    u = bits.astype(np.float64) * (1.0 / (1 << 53))
    return (low + (high - low) * u).reshape(shape)


def derive_seed(seed: int, *keys: int) -> int:
    """Mix ``keys`` into ``seed`` to get an independent child seed."""
    state = check_seed(seed)
    out = 0
    for k in keys:
        state, out = splitmix64(state ^ (k & MASK64))
    return out if keys else state


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & MASK64


class RngState:
    """xoshiro256** generator. Single owner; never share across threads."""

    algorithm = "xoshiro256**/splitmix64"

    def __init__(self, seed: int) -> None:
        self.seed = check_seed(seed)
        sm = self.seed
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s

    def __repr__(self) -> str:
        return f"RngState(seed={self.seed})"

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & MASK64, 7) * 9) & MASK64
        t = (s1 << 17) & MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def randbelow(self, n: int) -> int:
        """Unbiased integer in ``[0, n)``."""
        if n <= 0:
            raise ValueError("n must be positive")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            x = self.next_u64()
            if x < limit:
                return x % n

    def random(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randbelow(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, population: list, k: int) -> list:
        """``k`` distinct items drawn uniformly without replacement, in draw order."""
        if not 0 <= k <= len(population):
            raise ValueError(f"cannot sample {k} items from {len(population)}")
        pool = list(population)
        n = len(pool)
        for i in range(k):
            j = i + self.randbelow(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def spawn(self, index: int) -> "RngState":
        """Independent generator for worker partition ``index``."""
        return RngState(self.seed ^ (index & MASK64))
