"""Deterministic random-stream management.

One 64-bit run seed fans out into named substreams so that, e.g., adding an
extra draw during clustering cannot shift the noise used by training.
Stream names are hashed into the numpy SeedSequence spawn key.
"""

import hashlib

import numpy as np


def _name_key(name: str) -> int:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a PCG64 generator for the named substream of ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_name_key(name),))
    return np.random.Generator(np.random.PCG64(ss))


class StreamSet:
    """Lazy cache of named generators derived from one seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams: dict[str, np.random.Generator] = {}

    def get(self, name: str) -> np.random.Generator:
        if name not in self._streams:
            self._streams[name] = substream(self.seed, name)
        return self._streams[name]
