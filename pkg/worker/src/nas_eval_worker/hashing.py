"""Counter-based hashing, pinned bit-exactly to the shared specification.

This is an independent implementation of the same pipeline the engine
uses, so that the two sides of the wire protocol agree on every score:

  message  = ascii(tag) + '|' + each integer as 8 little-endian bytes
  h        = FNV-1a 64-bit over the message
  u1       = (low 32 bits of h + 0.5) / 2^32
  u2       = (high 32 bits of h + 0.5) / 2^32
  normal   = sqrt(-2 ln u1) * cos(2 pi u2)      (Box-Muller, one lane)
"""

from __future__ import annotations

import math
from collections.abc import Iterable

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
_TWO32 = float(2**32)


def encode_message(tag: str, values: Iterable[int]) -> bytes:
    parts = [tag.encode("ascii"), b"|"]
    for v in values:
        parts.append(int(v).to_bytes(8, "little", signed=False))
    return b"".join(parts)


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    return h


def hash_uniform(tag: str, values: Iterable[int]) -> float:
    """Uniform deviate in (0, 1) from the low 32 bits of the message hash."""
    h = fnv1a64(encode_message(tag, values))
    return ((h & 0xFFFFFFFF) + 0.5) / _TWO32


def hash_normal(tag: str, values: Iterable[int]) -> float:
    """Standard-normal deviate from both 32-bit lanes of the message hash."""
    h = fnv1a64(encode_message(tag, values))
    u1 = ((h & 0xFFFFFFFF) + 0.5) / _TWO32
    u2 = ((h >> 32) + 0.5) / _TWO32
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
