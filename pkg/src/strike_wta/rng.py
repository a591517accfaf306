"""Counter-based seed derivation.

Every random quantity in a run is keyed by ``(root_seed, episode_index,
stream)``, so episode ``i`` draws the same numbers no matter how episodes
are batched or spread over worker processes.
"""
from __future__ import annotations

import numpy as np

# stream identifiers
ENV_INIT = 0
ENV_NOISE = 1
POLICY = 2
TRAIN = 3

_MASK64 = (1 << 64) - 1


def seed_sequence(root_seed: int, *key: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(root_seed) & _MASK64, spawn_key=tuple(int(k) for k in key))


def generator(root_seed: int, *key: int) -> np.random.Generator:
    """Independent PCG64 generator for the given key path."""
    return np.random.Generator(np.random.PCG64(seed_sequence(root_seed, *key)))


def derive_seed(root_seed: int, *key: int) -> int:
    """64-bit integer seed for a child stream (stable across platforms)."""
    state = seed_sequence(root_seed, *key).generate_state(2, dtype=np.uint32)
    return int(state[0]) | (int(state[1]) << 32)


def episode_seed(root_seed: int, index: int) -> int:
    return derive_seed(root_seed, index)
