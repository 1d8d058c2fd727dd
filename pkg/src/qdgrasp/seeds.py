"""Stable seed derivation.

All randomness flows from explicit 64-bit seeds hashed with blake2b so results
never depend on process identity, hash salting, or evaluation order.
"""

import hashlib
import struct

MASK64 = (1 << 64) - 1


def stable_hash64(*parts) -> int:
    """Order-sensitive 64-bit hash of ints/strings/bytes."""
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        if isinstance(p, bytes):
            h.update(b"b")
            h.update(p)
        elif isinstance(p, str):
            h.update(b"s")
            h.update(p.encode())
        else:
            h.update(b"i")
            h.update(struct.pack("<Q", int(p) & MASK64))
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")
