"""Deterministic 64-bit PRNG used for everything except input data.

random.Random is avoided on purpose: its derived methods (randrange,
shuffle) changed behaviour between CPython releases, and campaign logs
must stay byte-identical for a given seed.
"""

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def mix64(x: int) -> int:
    """SplitMix64 finalizer; a bijection on 64-bit ints."""
    x = x & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(master: int, *indices: int) -> int:
    """Stable per-round / per-input seed derivation."""
    x = master & MASK64
    for i in indices:
        x = mix64((x + _GOLDEN + (i & MASK64)) & MASK64)
    return x


class Rng:
    """SplitMix64 stream generator."""

    def __init__(self, seed: int):
        self._state = seed & MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & MASK64
        return mix64(self._state)

    def below(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError("below() needs n >= 1")
        # 64-bit modulo bias is negligible for the small n used here,
        # but rejection sampling keeps the stream exactly uniform.
        limit = MASK64 - (MASK64 + 1) % n
        while True:
            v = self.next_u64()
            if v <= limit:
                return v % n

    def chance(self, p: float) -> bool:
        """True with probability p."""
        if p <= 0.0:
            return False
        if p >= 1.0:
            return True
        return self.next_u64() < int(p * (MASK64 + 1))

    def choice(self, seq):
        return seq[self.below(len(seq))]
