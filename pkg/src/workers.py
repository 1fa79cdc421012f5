"""
MitLindblad Workers
Thread pool for independent tasks (shot batches, trajectory batches, grid points)
"""

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar


THREADS_ENV = "MITIQ_LINDBLAD_THREADS"

T = TypeVar("T")
R = TypeVar("R")


def env_thread_cap() -> Optional[int]:
    """Thread cap from the environment, None when unset or unusable"""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw.strip() == "":
        return None
    try:
        value = int(raw)
    except ValueError:
        print(f"⚠ Ignoring {THREADS_ENV}={raw!r}: not an integer")
        return None
    if value < 1:
        print(f"⚠ Ignoring {THREADS_ENV}={raw!r}: must be at least 1")
        return None
    return value


def resolve_threads(requested: Optional[int] = None) -> int:
    """Requested count (or CPU count), capped by the environment"""
    threads = requested if requested is not None else (os.cpu_count() or 1)
    cap = env_thread_cap()
    if cap is not None:
        threads = min(threads, cap)
    return max(1, threads)


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: Optional[int] = None) -> List[R]:
    """
    Apply fn to every item; results keep the input order.

    Runs inline when one thread is enough.
    """
    items = list(items)
    workers = min(resolve_threads(threads), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="mitlindblad") as pool:
        return list(pool.map(fn, items))
