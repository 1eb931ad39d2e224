"""Chunked evaluation with a thread pool and order-stable reduction."""

import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

THREADS_ENV = "WALKER_SG_THREADS"


def default_threads():
    value = os.environ.get(THREADS_ENV, "")
    try:
        n = int(value)
    except ValueError:
        return 1
    return max(n, 1)


def map_chunks(fn, n_items, chunk_size, threads=None):
    """Apply ``fn(start, stop)`` over fixed chunks and concatenate the results.

    Chunk boundaries depend only on ``n_items`` and ``chunk_size``, never on
    ``threads``, so the concatenated output is bit-identical for any pool size.
    ``fn`` must return an array whose leading axis has length ``stop - start``.
    """
    threads = default_threads() if threads is None else max(int(threads), 1)
    chunk_size = max(int(chunk_size), 1)
    bounds = [(a, min(a + chunk_size, n_items)) for a in range(0, n_items, chunk_size)]
    if threads == 1 or len(bounds) == 1:
        parts = [fn(a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), bounds))
    return np.concatenate(parts, axis=0)


def chunk_for(n_per_item, budget=4_000_000):
    """Items per chunk so that a chunk holds about ``budget`` array elements."""
    return max(budget // max(int(n_per_item), 1), 1)
