"""Deterministic randomness with independent, addressable child streams.

Every stochastic component of the pipeline draws from a child stream
addressed by a root seed plus a path of stream ids (ints or short names).
The same address yields the same stream on every platform, distinct
addresses yield statistically independent streams, and the order in which
streams are created does not matter.  Streams are backed by numpy's
``SeedSequence``/PCG64, which provides the independence guarantees.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

_MAX_SEED = 2**64


def _id_word(part) -> int:
    """Map a stream id (int or string) to a stable non-negative word.

    Strings are hashed with sha256 so the mapping never depends on
    process-level hash randomization.
    """
    if isinstance(part, (bool,)):
        raise ConfigError("stream ids must be ints or strings, got bool")
    if isinstance(part, (int, np.integer)):
        if part < 0:
            raise ConfigError(f"stream ids must be non-negative, got {part}")
        return int(part)
    if isinstance(part, str):
        digest = hashlib.sha256(part.encode("utf-8")).digest()
        return int.from_bytes(digest[:4], "little")
    raise ConfigError(f"stream ids must be ints or strings, got {type(part).__name__}")


@dataclass(frozen=True)
class SeededRng:
    """Root of a tree of reproducible random streams."""

    seed: int

    def __post_init__(self):
        if not 0 <= self.seed < _MAX_SEED:
            raise ConfigError(f"seed must be in [0, 2**64), got {self.seed}")

    def stream(self, *path) -> np.random.Generator:
        """Return the generator addressed by ``path`` under this seed.

        Pure function of (seed, path): calling it twice gives two fresh
        generators that produce identical draws.
        """
        words = tuple(_id_word(p) for p in path)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=words)
        return np.random.default_rng(ss)

    def derive(self, *path) -> "SeededRng":
        """Child root seeded from (seed, path), for handing to subsystems."""
        return SeededRng(int(self.stream(*path).integers(0, _MAX_SEED, dtype=np.uint64)))

    def integer(self, *path) -> int:
        """A single 63-bit integer drawn from the addressed stream."""
        return int(self.stream(*path).integers(0, 2**63 - 1, dtype=np.int64))
