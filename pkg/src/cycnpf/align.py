"""Dynamic time warping between frame sequences."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STEPS = ((1, 1), (1, 0), (0, 1))  # tie-break preference order


@dataclass(frozen=True)
class AlignmentPath:
    pairs: np.ndarray  # [L, 2] of (i, j)
    cost: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "pairs", np.asarray(self.pairs, dtype=np.int64).reshape(-1, 2))

    def __len__(self):
        return self.pairs.shape[0]

    def steps(self) -> list[tuple[int, int]]:
        return [tuple(s) for s in np.diff(self.pairs, axis=0)]

    def transpose(self) -> "AlignmentPath":
        return AlignmentPath(self.pairs[:, ::-1].copy(), self.cost)

    def validate(self, len_x: int, len_y: int) -> None:
        p = self.pairs
        if len(p) == 0 or tuple(p[0]) != (0, 0) or tuple(p[-1]) != (len_x - 1, len_y - 1):
            raise ValueError(f"path must run from (0, 0) to ({len_x - 1}, {len_y - 1})")
        for step in self.steps():
            if step not in STEPS:
                raise ValueError(f"illegal DTW step {step}")


def _zscore_pair(x, y):
    both = np.concatenate([x, y], axis=0)
    mu = both.mean(axis=0)
    sd = both.std(axis=0)
    sd[sd == 0] = 1.0
    return (x - mu) / sd, (y - mu) / sd


def cost_matrix(x, y) -> np.ndarray:
    """Squared Euclidean distance between every frame pair."""
    out = np.empty((x.shape[0], y.shape[0]))
    for i in range(x.shape[0]):
        d = y - x[i]
        out[i] = np.sum(d * d, axis=1)
    return out


def dtw_align(x, y, zscore: bool = False, band: int | None = None) -> AlignmentPath:
    """Minimum-cost monotone alignment under steps (1,1), (1,0), (0,1).

    Path cost is the sum of local squared-Euclidean costs over visited pairs.
    Ties prefer the diagonal, then advancing ``x``, then advancing ``y``.
    ``band`` applies a Sakoe-Chiba constraint ``|i - j * Tx / Ty| <= band``.
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    if x.shape[0] == 0 or y.shape[0] == 0:
        raise ValueError("dtw_align: empty sequence")
    if zscore:
        x, y = _zscore_pair(x, y)
    if x.shape[1] == y.shape[1] and x.shape[0] == y.shape[0] and np.array_equal(x, y):
        n = x.shape[0]
        return AlignmentPath(np.stack([np.arange(n)] * 2, axis=1), 0.0)
    c = cost_matrix(x, y)
    tx, ty = c.shape
    if band is not None:
        ii = np.arange(tx)[:, None]
        jj = np.arange(ty)[None, :] * (tx / ty)
        c = np.where(np.abs(ii - jj) <= band, c, np.inf)
    acc = np.full((tx + 1, ty + 1), np.inf)
    acc[0, 0] = 0.0
    back = np.zeros((tx, ty), dtype=np.int8)
    for i in range(tx):
        row = c[i]
        prev = acc[i]
        cur = acc[i + 1]
        for j in range(ty):
            if i == 0 and j == 0:
                cur[1] = row[0]
                continue
            diag, up, left = prev[j], prev[j + 1], cur[j]
            best, k = diag, 0
            if up < best:
                best, k = up, 1
            if left < best:
                best, k = left, 2
            cur[j + 1] = best + row[j]
            back[i, j] = k
    if not np.isfinite(acc[tx, ty]):
        raise ValueError("dtw_align: band too narrow for the sequence lengths")
    i, j = tx - 1, ty - 1
    pairs = [(i, j)]
    while (i, j) != (0, 0):
        di, dj = STEPS[back[i, j]]
        i, j = i - di, j - dj
        pairs.append((i, j))
    pairs.reverse()
    return AlignmentPath(np.array(pairs), float(acc[tx, ty]))


def path_cost(x, y, path: AlignmentPath) -> float:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.atleast_2d(np.asarray(y, dtype=np.float64))
    d = x[path.pairs[:, 0]] - y[path.pairs[:, 1]]
    return float(np.sum(d * d))


def warp_to_target(x, path: AlignmentPath, target_len: int):
    """Resample ``x`` onto the target time axis along ``path``.

    Frame ``j`` of the result is ``x[i]`` for the last pair ``(i, j)``.
    Works on arrays and on anything with a ``take`` method (feature sequences).
    """
    n = x.num_frames if hasattr(x, "num_frames") else len(x)
    path.validate(n, target_len)
    index = np.zeros(target_len, dtype=np.int64)
    index[path.pairs[:, 1]] = path.pairs[:, 0]  # later pairs overwrite earlier ones
    if hasattr(x, "num_frames"):
        return x.take(index)
    return np.asarray(x)[index]
