"""Deterministic random-stream derivation.

Every stochastic draw in a campaign comes from a stream derived from
(root seed, purpose tag, counter). Replaying with the same root seed
reproduces a single-lane campaign bit for bit, and any individual rollout
can be reproduced later from its recorded child seed alone.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

# 48-bit child seeds survive a float64 round trip, so they can cross a JSON
# wire (the bridge protocol) without loss even for non-Python peers.
_SEED_BYTES = 6

SEED_MAX = (1 << (8 * _SEED_BYTES)) - 1


def child_seed(root: int, tag: str, *indices: int) -> int:
    """Derive a child seed from a root seed, a purpose tag and indices.

    :param root: campaign root seed (any Python int)
    :param tag: short purpose label, e.g. ``"rollout"`` or ``"mutate"``
    :param indices: position within the tagged stream
    :return: integer in ``[0, 2**48)``
    """
    h = hashlib.blake2b(digest_size=_SEED_BYTES)
    h.update(struct.pack("<Q", root & 0xFFFFFFFFFFFFFFFF))
    h.update(tag.encode("utf-8"))
    for i in indices:
        h.update(struct.pack("<q", int(i)))
    return int.from_bytes(h.digest(), "little")


def stream(seed: int) -> np.random.Generator:
    """Generator for a single derived seed."""
    return np.random.default_rng(int(seed))


class StreamFactory:
    """Hands out per-purpose (seed, Generator) pairs with independent counters.

    The counter state is a plain dict so it can be persisted in a resume file
    and restored, continuing the same deterministic sequence.
    """

    def __init__(self, root: int, counters: dict[str, int] | None = None):
        self.root = int(root)
        self._counters: dict[str, int] = dict(counters or {})

    def next_seed(self, tag: str) -> int:
        n = self._counters.get(tag, 0)
        self._counters[tag] = n + 1
        return child_seed(self.root, tag, n)

    def next_stream(self, tag: str) -> np.random.Generator:
        return stream(self.next_seed(tag))

    def counters(self) -> dict[str, int]:
        """Snapshot of the per-tag counters (for resume files)."""
        return dict(self._counters)
