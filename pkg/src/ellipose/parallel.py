"""Optional process-pool fan-out that never changes results."""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Optional, Sequence

THREADS_ENV = "ELLIPOSE_THREADS"


def worker_count(requested: Optional[int] = None) -> int:
    """Requested count capped by ELLIPOSE_THREADS (default: sequential)."""
    cap = os.environ.get(THREADS_ENV)
    try:
        cap_n = max(1, int(cap)) if cap else None
    except ValueError:
        cap_n = None
    n = requested if requested is not None else (cap_n or 1)
    if cap_n is not None:
        n = min(n, cap_n)
    return max(1, int(n))


def parallel_map(fn: Callable, items: Sequence, workers: Optional[int] = 1) -> list:
    """Map preserving order; results are identical for any worker count."""
    n = worker_count(workers)
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * n))))
