"""Named, order-independent random substreams.

Every random draw in the lab comes from a stream named by a tuple of parts
(run seed, purpose string, indices). Streams are derived by hashing the
joined parts with blake2b, so adding a new consumer never perturbs existing
draws and the same (seed, name) pair yields identical bytes on any platform.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(*parts: int | str) -> int:
    """Map a tuple of stream-name parts to a stable 64-bit seed."""
    key = "/".join(str(p) for p in parts)
    digest = hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def substream(*parts: int | str) -> np.random.Generator:
    """Independent PCG64 generator for the stream named by `parts`."""
    return np.random.default_rng(derive_seed(*parts))
