"""Deterministic random streams used by every seeded operation in the package.

Corpus generation, suite splitting, and subset sampling must replay
byte-identically across machines and interpreter versions, so nothing here
touches the platform RNG. The generator is SplitMix64 with the standard
constants; the full algorithm is spelled out so another implementation can
reproduce the streams:

    state   = (state + 0x9E3779B97F4A7C15) mod 2^64
    z       = state
    z       = ((z XOR (z >> 30)) * 0xBF58476D1CE4E5B9) mod 2^64
    z       = ((z XOR (z >> 27)) * 0x94D049BB133111EB) mod 2^64
    output  = z XOR (z >> 31)

Sub-streams are derived from a master seed and a text label via FNV-1a 64
over the UTF-8 label, mixed through the SplitMix64 finalizer:

    sub_seed = mix64(master_seed XOR fnv1a64(label))

Bounded draws use rejection sampling, so they are unbiased and independent
of the platform's integer width.
"""

from __future__ import annotations

from typing import Sequence, TypeVar

MASK64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x00000100000001B3

T = TypeVar("T")


def mix64(z: int) -> int:
    """SplitMix64 finalizer: diffuses all 64 input bits into the output."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return (z ^ (z >> 31)) & MASK64


def fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & MASK64
    return h


def derive_seed(master_seed: int, label: str) -> int:
    """Per-label sub-seed so corpora can grow without perturbing old cases."""
    return mix64((master_seed & MASK64) ^ fnv1a64(label.encode("utf-8")))


class Stream:
    """A single SplitMix64 stream. Not thread-safe; use one per task/case."""

    __slots__ = ("_state",)

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return (z ^ (z >> 31)) & MASK64

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], both ends inclusive."""
        if lo > hi:
            raise ValueError(f"empty range [{lo}, {hi}]")
        span = hi - lo + 1
        # Rejection sampling: discard draws from the biased tail.
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            draw = self.next_u64()
            if draw < limit:
                return lo + (draw % span)

    def random(self) -> float:
        """Float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def choice(self, seq: Sequence[T]) -> T:
        if not seq:
            raise ValueError("choice from empty sequence")
        return seq[self.randint(0, len(seq) - 1)]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), uniform without replacement."""
        if not 0 <= k <= n:
            raise ValueError(f"cannot sample {k} of {n}")
        pool = list(range(n))
        for i in range(k):
            j = self.randint(i, n - 1)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]
