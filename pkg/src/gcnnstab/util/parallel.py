"""
Deterministic parallel map.

Results always come back in input order, so any thread count produces
the same output as a serial run.
"""

import logging
import os
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, TypeVar

from tqdm import tqdm

from gcnnstab.config.settings import THREADS_ENV_VAR

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def resolve_threads(requested: Optional[int] = None) -> int:
    """
    Resolve the worker count.

    The GCNN_STAB_THREADS environment variable wins over the requested
    value; both fall back to a single thread.
    """
    env_value = os.environ.get(THREADS_ENV_VAR)
    if env_value:
        try:
            return max(1, int(env_value))
        except ValueError:
            logger.warning("Ignoring non-integer %s=%r", THREADS_ENV_VAR, env_value)
    if requested is None:
        return 1
    return max(1, int(requested))


def parallel_map(
    fn: Callable[[T], R],
    items: Iterable[T],
    threads: int = 1,
    desc: Optional[str] = None,
    show_progress: bool = False,
) -> list[R]:
    """
    Apply fn to every item, optionally on a thread pool.

    Args:
        fn: Function to apply
        items: Inputs; consumed eagerly
        threads: Worker threads (1 = run inline)
        desc: Progress bar label
        show_progress: Whether to show a tqdm progress bar

    Returns:
        List of results in input order
    """
    work: Sequence[T] = list(items)
    progress = tqdm(total=len(work), desc=desc, disable=not show_progress)

    def _run(item: T) -> R:
        result = fn(item)
        progress.update(1)
        return result

    try:
        if threads <= 1 or len(work) <= 1:
            return [_run(item) for item in work]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_run, work))
    finally:
        progress.close()


def chunk_ranges(total: int, chunk_size: int) -> list[range]:
    """Split range(total) into consecutive chunks of at most chunk_size."""
    return [range(start, min(start + chunk_size, total)) for start in range(0, total, chunk_size)]
