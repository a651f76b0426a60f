"""Deterministic seed derivation for nested RNG streams."""

from __future__ import annotations

import numpy as np


def derive_seed(*parts) -> int:
    """Collapse a tuple of integers into one child seed, deterministically."""
    return int(np.random.default_rng(parts).integers(0, 2 ** 63))
