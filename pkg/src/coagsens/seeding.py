"""Deterministic seed derivation and the reference random stream.

Replicate ``l`` of an experiment with base seed ``s`` always uses
``derive_seed(s, l)``; the independent algorithm further derives one
sub-seed per system via ``derive_seed(seed_l, 0)`` and
``derive_seed(seed_l, 1)``.  The derivation is bit-exact and platform
independent:

    derive_seed(s, l) = splitmix64(splitmix64(s) XOR splitmix64(l))

where ``splitmix64(x)`` is the canonical SplitMix64 output function
(constants 0x9E3779B97F4A7C15, 0xBF58476D1CE4E5B9, 0x94D049BB133111EB)
applied to ``x`` modulo 2**64.  Every stage is a bijection on 64-bit
integers, so distinct indexes always give distinct seeds.

Simulation randomness comes from xoshiro256++ whose four state words are
the first four SplitMix64 outputs after the seed.  The compiled engine
carries its own copy of the generator; :class:`Xoshiro256` below is the
pure-Python reference the tests compare it against.  Uniform doubles are
``(next() >> 11) * 2**-53``, i.e. 53-bit values in [0, 1).
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """SplitMix64 output function of ``x`` (mod 2**64)."""
    z = (x + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_seed(base_seed: int, index: int) -> int:
    """Per-replicate seed: output ``index`` of the SplitMix64 stream
    whose initial state is a hash of ``base_seed``.  Injective in the
    index for a fixed base, and not symmetric under swapping the two
    arguments (streams from different bases stay disjoint in practice)."""
    if index < 0:
        raise ValueError("index must be non-negative")
    stream = splitmix64(base_seed & _MASK64)
    return splitmix64((stream + (index & _MASK64) * _GOLDEN) & _MASK64)


def expand_state(seed: int) -> tuple[int, int, int, int]:
    """xoshiro256++ state words for ``seed``: four SplitMix64 draws."""
    s = seed & _MASK64
    words = []
    for _ in range(4):
        s = (s + _GOLDEN) & _MASK64
        z = ((s ^ (s >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        words.append(z ^ (z >> 31))
    if not any(words):  # cannot happen for SplitMix64 output, but stay safe
        words[0] = _GOLDEN
    return tuple(words)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Xoshiro256:
    """Reference xoshiro256++ stream (slow; tests and documentation only)."""

    def __init__(self, seed: int):
        self._s = list(expand_state(seed))

    def next_word(self) -> int:
        s = self._s
        result = (_rotl((s[0] + s[3]) & _MASK64, 23) + s[0]) & _MASK64
        t = (s[1] << 17) & _MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def uniform(self) -> float:
        return (self.next_word() >> 11) * 2.0**-53
