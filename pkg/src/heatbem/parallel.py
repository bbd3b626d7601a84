"""Worker-count knob shared by assembly and the studies."""
from concurrent.futures import ThreadPoolExecutor
import os

_threads = os.cpu_count() or 1


def set_threads(n):
    global _threads
    if n is None:
        n = os.cpu_count() or 1
    if int(n) < 1:
        raise ValueError("thread count must be >= 1")
    _threads = int(n)


def get_threads():
    return _threads


def run_chunks(fn, chunks):
    """Apply ``fn`` to every chunk; results come back in input order.

    Each work item must write only its own output region, which keeps the
    result independent of the worker count.
    """
    chunks = list(chunks)
    if _threads == 1 or len(chunks) < 2:
        return [fn(c) for c in chunks]
    with ThreadPoolExecutor(max_workers=_threads) as pool:
        return list(pool.map(fn, chunks))
