"""Deterministic child seeds from a root seed and integer keys."""

import numpy as np


def derive_seed(*keys: int) -> int:
    """A 63-bit seed that depends only on ``keys`` (order-sensitive)."""
    ss = np.random.SeedSequence([int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
