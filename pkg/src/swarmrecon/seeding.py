"""Deterministic named random streams.

Every command derives all of its randomness from one root seed. Distinct
purposes (environment resets, network init, demo noise, evaluation) get
independent generators keyed by name, so re-seeding one component never
shifts another.
"""

from __future__ import annotations

import hashlib

import numpy as np


def named_seed(root_seed: int, name: str) -> int:
    """Derive a stable 63-bit child seed from a root seed and a stream name."""
    digest = hashlib.sha256(f"{root_seed}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def named_rng(root_seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(named_seed(root_seed, name))


def as_rng(rng: int | np.random.Generator) -> np.random.Generator:
    """Accept either a raw integer seed or an already-built generator."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(int(rng))
