"""Row-chunked thread map whose output never depends on the thread count."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "WINDMIX_THREADS"
MIN_CHUNK = 4096


def thread_count(requested: int | None = None) -> int:
    cap = os.environ.get(THREADS_ENV)
    n = requested if requested is not None else (os.cpu_count() or 1)
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ValueError(f"{THREADS_ENV} must be an integer, got {cap!r}") from None
    return max(1, n)


def map_row_chunks(func, rows: np.ndarray, threads: int | None = None) -> np.ndarray:
    """Apply ``func`` to contiguous row blocks and stack the results in order.

    ``func`` must act row-wise, so each output row is computed from its input
    row alone and the result is bitwise identical for any thread count.
    """
    n = rows.shape[0]
    workers = thread_count(threads)
    if workers == 1 or n < 2 * MIN_CHUNK:
        return func(rows)
    bounds = np.linspace(0, n, min(workers, n // MIN_CHUNK) + 1).astype(int)
    blocks = [rows[a:b] for a, b in zip(bounds[:-1], bounds[1:])]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(func, blocks))
    return np.concatenate(parts, axis=0)
