"""Seeded sub-stream helpers for reproducible simulations."""
from __future__ import annotations

import random


def substream(seed: int, *labels) -> random.Random:
    """Return an independent RNG derived from a run seed and a label path.

    Each (seed, labels) pair maps to a fixed stream, so one subsystem can
    add or drop draws without perturbing any other subsystem's stream.
    """
    tag = ":".join(str(part) for part in labels)
    return random.Random(f"{seed}|{tag}")
