"""Ordered fan-out over a thread pool.

Results always come back in input order, so the worker count can never
change an output. The jitted kernels release the GIL.
"""
import os
from concurrent.futures import ThreadPoolExecutor


def resolve_threads(threads=None):
    if threads is None:
        env = os.environ.get("QSTRAT_THREADS", "").strip()
        threads = int(env) if env else 1
    return max(1, int(threads))


def ordered_map(fn, items, threads=None):
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
