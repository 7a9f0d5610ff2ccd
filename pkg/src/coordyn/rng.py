"""Seedable, portable random number generator.

Traces and reports must replay bit-for-bit across platforms and Python
versions, so randomness flows through an in-repo splitmix64 generator
instead of the stdlib Mersenne Twister (whose derived methods such as
shuffle/randrange are not guaranteed stable across Python releases).

splitmix64 reference sequence: state advances by the 64-bit constant
0x9E3779B97F4A7C15 and the output is a finalizing mix of the new state.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1


def derive_seed(master: int, purpose: str) -> int:
    """Derive a deterministic 64-bit sub-seed from a master seed and a label.

    One config-level seed reproduces every component; each consumer gets
    an independent stream keyed by its purpose string.
    """
    digest = hashlib.sha256(f"{master}:{purpose}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class SplitMix64:
    """Deterministic 64-bit generator with a documented algorithm."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def randrange(self, n: int) -> int:
        """Uniform integer in [0, n) via rejection sampling (unbiased)."""
        if n <= 0:
            raise ValueError("randrange() bound must be positive")
        # Largest multiple of n that fits in 64 bits; reject above it.
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            v = self.next_u64()
            if v < limit:
                return v % n

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive."""
        return lo + self.randrange(hi - lo + 1)

    def choice(self, seq):
        return seq[self.randrange(len(seq))]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randrange(i + 1)
            items[i], items[j] = items[j], items[i]

    def getrandbits(self, k: int) -> int:
        bits = 0
        filled = 0
        while filled < k:
            bits |= self.next_u64() << filled
            filled += 64
        return bits & ((1 << k) - 1)
