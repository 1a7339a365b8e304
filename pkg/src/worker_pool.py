#!/usr/bin/env python3
"""
Ordered worker pool for embarrassingly parallel sweeps
Results always come back in item order, so every reduction done by the
caller is independent of the worker count
"""

import os
import time
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, List, Optional

logger = logging.getLogger(__name__)


class WorkerPool:
    """Process pool with an in-process fallback for workers <= 1"""

    def __init__(self, workers: int = 1, chunksize: Optional[int] = None):
        if workers is None or workers < 1:
            workers = 1
        self.workers = min(workers, os.cpu_count() or 1) if workers > 1 else 1
        self.chunksize = chunksize
        self.batches_processed = 0
        self._executor: Optional[ProcessPoolExecutor] = None

        if workers > self.workers:
            logger.info(f"Worker pool capped at {self.workers} (requested {workers})")

    def __enter__(self) -> 'WorkerPool':
        if self.workers > 1:
            self._executor = ProcessPoolExecutor(max_workers=self.workers)
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()

    def close(self):
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def map(self, fn: Callable[[Any], Any], items: Iterable[Any]) -> List[Any]:
        """
        Apply fn to every item; fn must be picklable when workers > 1
        (module-level functions or functools.partial over them).
        """
        items = list(items)
        start_time = time.time()

        if self.workers <= 1 or len(items) <= 1:
            results = [fn(item) for item in items]
        else:
            executor = self._executor or ProcessPoolExecutor(max_workers=self.workers)
            try:
                chunksize = self.chunksize or max(1, len(items) // (4 * self.workers))
                results = list(executor.map(fn, items, chunksize=chunksize))
            finally:
                if executor is not self._executor:
                    executor.shutdown(wait=True)

        self.batches_processed += 1
        logger.debug(f"Processed batch {self.batches_processed}: {len(items)} items "
                     f"on {self.workers} worker(s) in {time.time() - start_time:.2f}s")
        return results


def serial_map(fn: Callable[[Any], Any], items: Iterable[Any], pool: Optional[WorkerPool] = None) -> List[Any]:
    """pool.map when a pool is given, a plain ordered loop otherwise"""
    if pool is None:
        return [fn(item) for item in items]
    return pool.map(fn, items)
