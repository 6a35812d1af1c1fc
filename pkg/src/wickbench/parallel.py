"""Ordered chunked map over sample indices.

Chunk boundaries depend only on the chunk size, never on the worker count, and
results come back in chunk order. Together with per-sample streams this makes
every reduction bit-identical for any number of workers.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable

ENV_WORKERS = "WICKBENCH_WORKERS"


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        env = os.environ.get(ENV_WORKERS)
        workers = int(env) if env else 1
    if workers < 1:
        raise ValueError("workers must be >= 1")
    return workers


def chunk_ranges(n: int, chunk: int) -> list[tuple[int, int]]:
    return [(s, min(s + chunk, n)) for s in range(0, n, chunk)]


def map_chunks(func: Callable, n: int, chunk: int, args: tuple = (), workers: int | None = None,
               offset: int = 0) -> list:
    """``[func(start, stop, *args) for each chunk]`` in chunk order."""
    workers = resolve_workers(workers)
    ranges = [(a + offset, b + offset) for a, b in chunk_ranges(n, chunk)]
    if workers == 1 or len(ranges) == 1:
        return [func(a, b, *args) for a, b in ranges]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        futs = [ex.submit(func, a, b, *args) for a, b in ranges]
        return [f.result() for f in futs]
