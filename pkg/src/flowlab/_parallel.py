"""Deterministic worker pool helpers.

Parallelism never changes results: every task carries its own derived RNG
stream and results are collected in task order, so a run with 8 workers is
bit-identical to a single-threaded run.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_THREADS_ENV = "FLOWLAB_THREADS"


def resolve_threads(threads: int | None = None) -> int:
    """Pick the worker count: explicit arg, else FLOWLAB_THREADS, else 1."""
    if threads is not None:
        return max(1, int(threads))
    env = os.environ.get(_THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def parallel_map(fn, items, threads: int | None = None) -> list:
    """Map `fn` over `items`, preserving order regardless of worker count."""
    n = resolve_threads(threads)
    items = list(items)
    if n <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
