"""Deterministic random streams: one user seed, named substreams per component."""

from __future__ import annotations

import hashlib

import numpy as np


def substream(seed: int, name: str) -> np.random.Generator:
    """Return a Generator for the named component, derived from the user seed.

    The same (seed, name) pair always yields the same stream, and distinct
    names yield statistically independent streams, so adding a consumer never
    perturbs the draws seen by existing ones.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    tag = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), tag]))
