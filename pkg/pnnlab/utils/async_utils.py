import asyncio
import functools
import logging
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from typing import Any, Callable, List, Sequence

logger = logging.getLogger(__name__)


@contextmanager
def get_event_loop():
    """Context manager owning a fresh event loop"""
    loop = asyncio.new_event_loop()
    asyncio.set_event_loop(loop)
    try:
        yield loop
    finally:
        loop.close()
        asyncio.set_event_loop(None)


def async_handler(func: Callable) -> Callable:
    """Runs an async function to completion from synchronous code"""
    @functools.wraps(func)
    def wrapper(*args: Any, **kwargs: Any) -> Any:
        with get_event_loop() as loop:
            return loop.run_until_complete(func(*args, **kwargs))
    return wrapper


@async_handler
async def _gather_in_processes(fn: Callable, jobs: Sequence, max_workers: int) -> List:
    loop = asyncio.get_running_loop()
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        futures = [loop.run_in_executor(pool, fn, job) for job in jobs]
        return await asyncio.gather(*futures)


def run_parallel(fn: Callable, jobs: Sequence, max_workers: int = 1) -> List:
    """
    Applies fn to every job and returns results in job order.

    With more than one worker the jobs run in a process pool; fn and the jobs
    must then be picklable.
    """
    jobs = list(jobs)
    if max_workers <= 1 or len(jobs) <= 1:
        logger.debug(f"Running {len(jobs)} jobs inline")
        return [fn(job) for job in jobs]
    workers = min(max_workers, len(jobs))
    logger.info(f"Running {len(jobs)} jobs on {workers} worker processes")
    return _gather_in_processes(fn, jobs, workers)
