"""Deterministic, lexicographically sortable identifiers.

Ids use the 26-character Crockford base32 layout of a ULID, but the 48-bit
time field holds a per-generator monotonic counter and the 80 random bits
come from a seeded RNG, so a session replayed with the same seed mints the
same ids and files merge in creation order.
"""

from __future__ import annotations

import random

CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"

_COUNTER_BITS = 48
_RANDOM_BITS = 80
_TOTAL_BITS = _COUNTER_BITS + _RANDOM_BITS
_ID_LENGTH = 26


def encode_base32(value: int, length: int) -> str:
    chars = []
    for _ in range(length):
        chars.append(CROCKFORD[value & 0x1F])
        value >>= 5
    return "".join(reversed(chars))


class IdGenerator:
    """Mints prefixed sortable ids from a shared counter and a seeded RNG."""

    def __init__(self, seed: int, counter: int = 0):
        self._seed = seed
        self._counter = counter
        self._rng = random.Random(f"ids:{seed}")
        # Replay the random stream consumed by already-minted ids so a
        # generator restored from a checkpoint continues identically.
        for _ in range(counter):
            self._rng.getrandbits(_RANDOM_BITS)

    @property
    def counter(self) -> int:
        return self._counter

    def next_id(self, prefix: str) -> str:
        if self._counter >= (1 << _COUNTER_BITS):
            raise OverflowError("id counter exhausted")
        value = (self._counter << _RANDOM_BITS) | self._rng.getrandbits(_RANDOM_BITS)
        self._counter += 1
        return f"{prefix}-{encode_base32(value, _ID_LENGTH)}"
