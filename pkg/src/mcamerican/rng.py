"""Counter-based standard normal draws.

Every path owns a fixed slot inside a fixed-size block, and every block is
driven by its own Philox generator keyed from ``(seed, stream, block)``.  A
draw is therefore a pure function of ``(seed, stream, path, column)`` and the
output does not depend on how many threads fill the blocks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
from scipy.special import ndtri

from .errors import ParameterError

BLOCK_SIZE = 4096

# stream tags
FORWARD = 0
BRIDGE = 1
TERMINAL = 2
AUXILIARY = 3
STUDY = 4

_TWO_M53 = 2.0**-53


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def _block(seed: int, key: tuple[int, ...], block: int, rows: int, cols: int) -> np.ndarray:
    ss = np.random.SeedSequence([seed, *key, block])
    bits = np.random.Philox(ss).random_raw(rows * cols)
    # midpoint of a 53-bit cell, never exactly 0 or 1
    u = ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53
    return u.reshape(rows, cols)


def uniforms(seed: int, key: tuple[int, ...], n_rows: int, n_cols: int, threads: int = 1) -> np.ndarray:
    """Uniforms on (0, 1) of shape ``(n_rows, n_cols)``, row-major per path."""
    seed = check_seed(seed)
    out = np.empty((n_rows, n_cols))
    if n_rows == 0 or n_cols == 0:
        return out
    starts = range(0, n_rows, BLOCK_SIZE)

    def fill(start: int) -> None:
        rows = min(BLOCK_SIZE, n_rows - start)
        # a block always draws BLOCK_SIZE rows so a path's draws never depend on n_rows
        out[start:start + rows] = _block(seed, key, start // BLOCK_SIZE, BLOCK_SIZE, n_cols)[:rows]

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, starts))
    else:
        for start in starts:
            fill(start)
    return out


def normals(seed: int, key: tuple[int, ...], n_rows: int, n_cols: int, threads: int = 1) -> np.ndarray:
    """Standard normals by inverse-CDF transform of :func:`uniforms`."""
    return ndtri(uniforms(seed, key, n_rows, n_cols, threads))
