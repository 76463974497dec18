"""Deterministic 64-bit PRNG used wherever trained models must be reproducible.

The generator is SplitMix64. All arithmetic is modulo 2**64:

    state  = state + 0x9E3779B97F4A7C15
    z      = state
    z      = (z XOR (z >> 30)) * 0xBF58476D1CE4E5B9
    z      = (z XOR (z >> 27)) * 0x94D049BB133111EB
    output = z XOR (z >> 31)

Derived draws are part of the same reproducibility contract:

* ``next_below(n)`` is ``next_u64() % n`` (plain modulo; the bias is
  irrelevant at our n and the construction is trivial to port).
* ``sample_indices(n, k)`` runs a partial Fisher-Yates shuffle over
  ``[0, n)`` consuming exactly ``min(k, n)`` draws, then returns the
  selected prefix sorted ascending.

A reimplementation in any language that follows these rules reproduces
forest training bit for bit.
"""

from __future__ import annotations

_MASK = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int) -> None:
        self.state = seed & _MASK

    def next_u64(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
        return z ^ (z >> 31)

    def next_below(self, n: int) -> int:
        if n <= 0:
            raise ValueError("n must be positive")
        return self.next_u64() % n

    def sample_indices(self, n: int, k: int) -> list[int]:
        k = min(k, n)
        pool = list(range(n))
        for i in range(k):
            j = i + self.next_below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return sorted(pool[:k])
