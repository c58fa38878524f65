"""8-bit mu-law companding (mu = 255).

Encoding floors the companded value into one of 256 equal bins; decoding
returns the bin centre mapped back through the inverse compander.
"""

import numpy as np

MU = 255
CLASSES = MU + 1


def mulaw_encode(x, mu: int = MU):
    x = np.clip(np.asarray(x, dtype=np.float64), -1.0, 1.0)
    y = np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)
    code = np.floor((y + 1.0) / 2.0 * (mu + 1))
    return np.clip(code, 0, mu).astype(np.int64)


def mulaw_decode(code, mu: int = MU):
    code = np.asarray(code, dtype=np.float64)
    y = (code + 0.5) / (mu + 1) * 2.0 - 1.0
    return np.sign(y) * np.expm1(np.abs(y) * np.log1p(mu)) / mu
