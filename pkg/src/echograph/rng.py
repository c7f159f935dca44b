"""Named, splittable random streams on a counter-based generator.

Every stochastic site in the package draws from a stream derived from a root
seed plus a path of names, e.g. ``stream(seed, "sample", "layout", scene_id)``.
Derivation hashes the path into a Philox key, so streams are independent,
reproducible, and insensitive to call order. Root seeds are plain integers and
are recorded in every artifact that consumed them.
"""

from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["derive_key", "stream"]


def derive_key(*parts) -> int:
    """Hash a path of seed parts into a 128-bit Philox key."""
    text = "/".join(str(p) for p in parts)
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:16], "little")


def stream(*parts) -> np.random.Generator:
    """A fresh generator for the named site. Same parts, same stream."""
    return np.random.Generator(np.random.Philox(key=derive_key(*parts)))
