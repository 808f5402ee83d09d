"""Stable derivation of child seeds from a base seed and string tags."""

from __future__ import annotations

import hashlib

__all__ = ["derive_seed"]


def derive_seed(base: int, *tags) -> int:
    """Hash (base, tags...) to a 63-bit seed, stable across platforms and runs."""
    key = "/".join([str(int(base))] + [str(t) for t in tags])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1
