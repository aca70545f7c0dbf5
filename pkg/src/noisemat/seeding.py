"""Deterministic RNG derivation.

All randomness in the package flows from one master seed.  Each component
derives its own generator from the master seed plus a named scope (component
name and, where relevant, a round or instance index), so re-running a single
pipeline stage reproduces exactly the stream it saw inside a full run.
"""

from __future__ import annotations

import zlib

import numpy as np


def _scope_word(part) -> int:
    if isinstance(part, (int, np.integer)):
        return int(part) & 0xFFFFFFFF
    return zlib.crc32(str(part).encode("utf-8"))


def derive_rng(seed: int, *scope) -> np.random.Generator:
    """Generator for ``scope`` (component name, indices) under a master seed."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_scope_word(p) for p in scope]
    return np.random.default_rng(np.random.SeedSequence(entropy))
