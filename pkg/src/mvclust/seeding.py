"""Deterministic seed derivation shared by every stochastic component."""

from __future__ import annotations

import numpy as np

__all__ = ["spawn_seeds", "named_seed", "rng_from"]


def spawn_seeds(seed: int, n: int) -> list[int]:
    """Derive n independent child seeds from a pipeline seed.

    Children are stable across processes (no reliance on Python hashing),
    so any component can be re-run in isolation with its derived seed.
    """
    children = np.random.SeedSequence(seed).spawn(n)
    return [int(c.generate_state(1)[0]) for c in children]


def named_seed(seed: int, name: str) -> int:
    """Derive a child seed keyed by a string label instead of a position.

    Used where results must not depend on iteration order (e.g. per-view
    work inside an ensemble: permuting the views must not reshuffle seeds).
    """
    entropy = [seed & 0xFFFFFFFF, len(name)] + list(name.encode("utf-8"))
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def rng_from(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed)
