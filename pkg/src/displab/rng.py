"""Deterministic randomness for the whole harness.

Every stochastic operation (pixel sampling, shape placement, triplet
mining, noise init, train/eval splits) draws from SplitMix64, a public
64-bit generator with a one-line documented algorithm:

    state += 0x9E3779B97F4A7C15
    z = state
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)

All arithmetic is modulo 2**64. The same algorithm is implemented in the
compiled masking kernels; outputs are bit-identical across backends and
platforms, so a recorded seed reproduces any run exactly.
"""

from __future__ import annotations

import hashlib

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z: int) -> int:
    """SplitMix64 finalizer: avalanche a 64-bit value."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


class SplitMix64:
    """Sequential SplitMix64 stream seeded with a 64-bit integer."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_uint64(self) -> int:
        self._state = (self._state + GOLDEN) & MASK64
        return mix64(self._state)

    def randbelow(self, n: int) -> int:
        """Integer in [0, n). Plain modulo; the bias is < n/2**64."""
        if n <= 0:
            raise ValueError(f"randbelow requires n >= 1, got {n}")
        return self.next_uint64() % n

    def float53(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_uint64() >> 11) * (2.0 ** -53)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.float53()

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        n = len(items)
        for j in range(n - 1):
            i = j + self.randbelow(n - j)
            items[j], items[i] = items[i], items[j]


def derive_seed(base: int, *parts) -> int:
    """Stable sub-seed from a base seed and a label path.

    Uses BLAKE2b over the byte rendering of (base, parts), so the result
    is independent of Python's hash randomization and of process/platform.
    Parts may be ints or strings.
    """
    h = hashlib.blake2b(digest_size=8)
    h.update(int(base & MASK64).to_bytes(8, "little"))
    for part in parts:
        if isinstance(part, int):
            h.update(b"i")
            h.update(int(part & MASK64).to_bytes(8, "little"))
        else:
            data = str(part).encode("utf-8")
            h.update(b"s")
            h.update(len(data).to_bytes(4, "little"))
            h.update(data)
    return int.from_bytes(h.digest(), "little")
