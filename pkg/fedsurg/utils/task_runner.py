#!/usr/bin/env python3
"""
Task Runner - thread-pool execution of independent work items
Handles ordered result collection with progress callbacks
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

ProgressCallback = Callable[[int, str], None]


class TaskRunner:
    """Runs work items on a fixed number of worker threads"""

    def __init__(self, workers: int = 1, label: str = "tasks"):
        self.workers = max(1, int(workers))
        self.label = label

    def map(self, fn: Callable[[T], R], items: Sequence[T],
            progress_callback: Optional[ProgressCallback] = None) -> List[R]:
        """
        Apply fn to every item

        Args:
            fn: Work function; must not share mutable state across items
            items: Work items
            progress_callback: Function to call with (percent, message) after each item

        Returns:
            Results in the order of items, whatever the completion order
        """
        items = list(items)
        total = len(items)
        results: List[R] = [None] * total
        if self.workers == 1 or total <= 1:
            for i, item in enumerate(items):
                results[i] = fn(item)
                self._report(progress_callback, i + 1, total)
        else:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                futures = [pool.submit(fn, item) for item in items]
                for i, future in enumerate(futures):
                    # re-raises the worker's exception here
                    results[i] = future.result()
                    self._report(progress_callback, i + 1, total)
        return results

    def _report(self, progress_callback: Optional[ProgressCallback], done: int, total: int) -> None:
        if progress_callback and total:
            progress_callback(int(100 * done / total), f"{self.label}: {done}/{total}")


def log_progress(prefix: str) -> ProgressCallback:
    """Progress callback that writes to the log at DEBUG level"""
    def callback(percent: int, message: str) -> None:
        logger.debug(f"{prefix} [{percent:3d}%] {message}")
    return callback
