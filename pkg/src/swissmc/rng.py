"""Seed derivation and reproducible random streams.

Every random quantity in the package is keyed by a (master_seed, stream_id)
pair.  Stream seeds are derived with a splitmix64 chain, so any tuple of
integers (e.g. master seed, repetition index, batch id) maps to one 64-bit
seed independently of platform, worker count and execution order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(state: int) -> int:
    """One splitmix64 output step for a 64-bit state."""
    z = (state + _GOLDEN) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(*parts: int) -> int:
    """Fold integer parts into a single 64-bit seed.

    Defined as acc_0 = 0, acc_{k+1} = splitmix64(acc_k XOR part_k); the final
    accumulator is the seed.  Parts are reduced modulo 2**64 first, so
    negative inputs are accepted.
    """
    acc = 0
    for part in parts:
        acc = splitmix64(acc ^ (int(part) & _MASK64))
    return acc


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by (master_seed, stream_id).

    Distinct key pairs give streams that are independent for practical
    purposes (PCG64 seeded through the splitmix64 mix); identical pairs
    replay the identical sequence.
    """

    master_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """A fresh generator; repeated calls replay the same sequence."""
        seed = mix_seed(self.master_seed, self.stream_id)
        return np.random.Generator(np.random.PCG64(seed))
