"""Ordered, throttled fan-out of independent computations."""

import asyncio
import logging
from collections.abc import Callable, Sequence
from typing import TypeVar

from mmforge.settings import get_settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


async def _gather_ordered(
    fn: Callable[[T], R], items: Sequence[T], threads: int
) -> list[R]:
    semaphore = asyncio.Semaphore(threads)

    async def _run(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(fn, item)

    return list(await asyncio.gather(*(_run(item) for item in items)))


def map_ordered(
    fn: Callable[[T], R],
    items: Sequence[T],
    threads: int | None = None,
) -> list[R]:
    """Apply ``fn`` to every item, returning results in input order.

    With one thread the items run inline, in order. With more, at most
    ``threads`` calls run concurrently; ordering of the returned list never
    depends on scheduling, so order-fixed reductions stay deterministic.

    Args:
        fn: The function to apply. Must not share gradient-tracked tensors
            between calls.
        items: The inputs.
        threads: Concurrency cap. Defaults to MMFORGE_THREADS.

    Returns:
        The results, index-aligned with ``items``.
    """
    threads = threads or get_settings().threads
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug(f"Fanning out {len(items)} calls over {threads} threads")
    return asyncio.run(_gather_ordered(fn, items, threads))
