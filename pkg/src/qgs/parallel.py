"""Order-preserving parallel map capped by ``QGS_THREADS``."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def thread_count() -> int:
    raw = os.environ.get("QGS_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"QGS_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"QGS_THREADS must be a positive integer, got {raw!r}")
    return n


def pmap(fn: Callable[[T], R], items: Iterable[T]) -> list[R]:
    """``[fn(x) for x in items]``, possibly threaded; results keep input order."""
    items = list(items)
    n = min(thread_count(), len(items))
    if n <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))
