"""Counter-based Gaussian increments.

Every draw is a pure function of ``(seed, stream, path, step)``: the Philox
key holds ``seed`` and ``stream``, the counter holds the path index, and the
step index is the position in that path's output sequence.  Results therefore
do not depend on how paths are split across workers.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1


def _key(seed: int, stream: int) -> int:
    if seed < 0 or stream < 0:
        raise ValueError("seed and stream must be non-negative")
    return (int(seed) & _MASK64) | ((int(stream) & _MASK64) << 64)


def _row(key: int, path: int, steps: int) -> np.ndarray:
    raw = np.random.Philox(key=key, counter=[0, int(path), 0, 0]).random_raw(steps)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0 ** -53
    return ndtri(u)


def standard_normals(seed: int, paths, steps: int, stream: int = 0, workers: int = 1) -> np.ndarray:
    """Standard normal draws, shape ``(len(paths), steps)``.

    Row ``r`` holds the first ``steps`` draws of path ``paths[r]``.
    """
    paths = np.asarray(paths, dtype=np.int64).ravel()
    out = np.empty((paths.size, steps))
    if steps == 0 or paths.size == 0:
        return out
    key = _key(seed, stream)

    def fill(chunk):
        for r in chunk:
            out[r] = _row(key, paths[r], steps)

    rows = np.arange(paths.size)
    if workers <= 1:
        fill(rows)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, np.array_split(rows, workers)))
    return out
