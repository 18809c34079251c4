"""Worker policy for optional concurrent fitness/point evaluation.

The QPSO_TRACK_THREADS environment variable caps the worker count; 0 forces
sequential execution regardless of any parallel flag. Results always come
back in input order, so toggling parallelism never changes output.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

ENV_THREADS = "QPSO_TRACK_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def worker_count() -> int:
    raw = os.environ.get(ENV_THREADS)
    if raw is None:
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ValueError(f"{ENV_THREADS} must be an integer, got {raw!r}") from exc
    return max(n, 0)


def ordered_map(fn: Callable[[T], R], items: Sequence[T], parallel: bool) -> list[R]:
    """Apply fn to every item, preserving order; threads only if requested."""
    workers = worker_count() if parallel else 0
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))
