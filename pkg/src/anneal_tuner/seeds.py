"""Deterministic seed derivation.

Every random stream in the package is keyed by a tuple of labels hashed
together with the master seed, so results never depend on the order in
which work is scheduled.
"""

import hashlib

_MASK63 = (1 << 63) - 1


def derive_seed(*parts) -> int:
    """Hash an arbitrary tuple of ints/strings into a 63-bit seed."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(repr(part).encode())
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little") & _MASK63
