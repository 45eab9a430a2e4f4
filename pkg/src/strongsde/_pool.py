"""Chunked work distribution with order-preserving assembly.

Work is split into fixed-size chunks whose boundaries never depend on the
worker count; each chunk derives its randomness from its own index, so
results are byte-identical however the chunks are scheduled.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def chunk_bounds(n_items: int, chunk_size: int):
    return [(lo, min(lo + chunk_size, n_items)) for lo in range(0, n_items, chunk_size)]


def map_chunks(worker, payload: dict, n_items: int, chunk_size: int, workers: int):
    """Apply ``worker(payload, lo, hi)`` over fixed chunks, in order.

    ``worker`` must be a module-level function and ``payload`` picklable
    when ``workers > 1``.
    """
    bounds = chunk_bounds(n_items, chunk_size)
    if workers <= 1:
        return [worker(payload, lo, hi) for lo, hi in bounds]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(worker, payload, lo, hi) for lo, hi in bounds]
        return [f.result() for f in futures]
