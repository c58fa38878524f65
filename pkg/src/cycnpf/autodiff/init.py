"""Weight initialisers (seeded through an explicit Generator)."""

import numpy as np


def scaled_uniform(rng: np.random.Generator, shape, fan_in: int, gain: float = 1.0):
    bound = gain / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def orthogonal(rng: np.random.Generator, rows: int, cols: int):
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q *= np.sign(np.diag(r))
    return q if rows >= cols else q.T


def gru_recurrent(rng, hidden: int):
    """``[H, 3H]`` recurrent matrix: one orthogonal block per gate."""
    return np.concatenate([orthogonal(rng, hidden, hidden) for _ in range(3)], axis=1)
