"""Per-trajectory seed derivation from a master seed."""
from __future__ import annotations

import numpy as np


def trajectory_seeds(master_seed: int, index: int) -> tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """Field and trajectory seed sequences for ensemble member ``index``.

    Both derive from ``SeedSequence(master_seed, spawn_key=(index,))``; the
    trajectory stream appends 1 to the spawn key. The mixing is numpy's
    documented SeedSequence hash, so streams are stable across platforms.
    """
    field_seq = np.random.SeedSequence(master_seed, spawn_key=(index,))
    traj_seq = np.random.SeedSequence(master_seed, spawn_key=(index, 1))
    return field_seq, traj_seq


def field_seed(master_seed: int, index: int) -> int:
    """128-bit integer key for the field generator of ensemble member ``index``."""
    words = trajectory_seeds(master_seed, index)[0].generate_state(4, dtype=np.uint32)
    return int(sum(int(w) << (32 * i) for i, w in enumerate(words)))
