"""Ordered parallel map: results come back in input order whatever the worker count."""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("NOVIKOV_WORKERS", "1")))
    except ValueError:
        return 1


def pmap(fn, items, workers: int = None, chunksize: int = None) -> list:
    """map(fn, items) over a process pool; workers=1 runs inline.

    `fn` must be a picklable top-level callable. Work items carry all the
    state they need, so scheduling order cannot change any result.
    """
    items = list(items)
    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    chunksize = chunksize or max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunksize))
