# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Order-preserving parallel map over worker processes.
"""

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Optional, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def default_threads() -> int:
    return max(1, (os.cpu_count() or 1) - 1)


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: Optional[int] = 1) -> List[R]:
    """``[fn(x) for x in items]``, computed by up to ``threads`` processes.

    Results come back in input order, so output never depends on the number
    of workers as long as ``fn`` draws its randomness from its argument.
    """
    threads = default_threads() if threads is None else threads
    if threads < 1:
        raise ValueError("threads must be at least 1")
    if threads == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    workers = min(threads, len(items))
    logger.debug("mapping %d items over %d workers", len(items), workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def job_rng(seed: int, *path: int) -> np.random.Generator:
    """Generator for one unit of work, a pure function of ``seed`` and ``path``."""
    return np.random.default_rng(np.random.SeedSequence([seed, *path]))
