"""Seed splitting: every random stream is a child of one root seed."""

from __future__ import annotations

import numpy as np


def child_seed(seed, *keys) -> np.random.SeedSequence:
    """Seed sequence for the stream identified by integer ``keys``.

    The stream is a deterministic function of ``(seed, *keys)`` only, so
    replications and particle blocks can run in any order or in parallel.
    """
    return np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))


def child_rng(seed, *keys) -> np.random.Generator:
    return np.random.default_rng(child_seed(seed, *keys))
