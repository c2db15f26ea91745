# Copyright 2022 MosaicML Examples authors
# SPDX-License-Identifier: Apache-2.0

"""Bounded worker pool for per-query work.

Workers receive the read-only state they need (index, ranker config,
vocabulary, ...) once through the pool initializer instead of once per
task. Results always come back in input order, so the caller's fold is the
same whatever the worker count.
"""

import multiprocessing as mp
import os
from concurrent.futures import ProcessPoolExecutor as Pool
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

from tqdm import tqdm

__all__ = ['default_threads', 'worker_state', 'run_parallel', 'run_serial',
           'map_ordered']

T = TypeVar('T')
R = TypeVar('R')

_WORKER_STATE: Dict[str, Any] = {}


def default_threads() -> int:
    return os.cpu_count() or 1


def worker_state() -> Dict[str, Any]:
    """The shared state installed for the current worker."""
    return _WORKER_STATE


def _init_worker(state: Dict[str, Any]) -> None:
    _WORKER_STATE.clear()
    _WORKER_STATE.update(state)


def run_serial(fn: Callable[[T], R],
               items: Sequence[T],
               state: Optional[Dict[str, Any]],
               progress_bar: bool = False) -> List[R]:
    """Runs ``fn`` in-process. Useful for debugging and for tiny inputs."""
    previous = dict(_WORKER_STATE)
    _init_worker(state or {})
    try:
        return [fn(item) for item in tqdm(items, disable=not progress_bar)]
    finally:
        _init_worker(previous)


def run_parallel(fn: Callable[[T], R],
                 items: Sequence[T],
                 state: Optional[Dict[str, Any]],
                 threads: int,
                 progress_bar: bool = False) -> List[R]:
    ctx = mp.get_context('spawn')
    max_workers = min(threads, len(items))
    chunksize = max(1, len(items) // (4 * max_workers))
    with Pool(max_workers=max_workers,
              mp_context=ctx,
              initializer=_init_worker,
              initargs=(state or {},)) as pool:
        return list(
            tqdm(pool.map(fn, items, chunksize=chunksize),
                 total=len(items),
                 disable=not progress_bar))


def map_ordered(fn: Callable[[T], R],
                items: Sequence[T],
                state: Optional[Dict[str, Any]] = None,
                threads: int = 1,
                progress_bar: bool = False) -> List[R]:
    """Applies ``fn`` to every item and returns results in input order.

    Args:
        fn (Callable): A module-level function (it must pickle). It reads
            shared data through :func:`worker_state`.
        items (Sequence): Work items.
        state (Dict[str, Any], optional): Shared read-only state.
        threads (int): Worker count; ``<= 1`` runs in-process.
        progress_bar (bool): Show a tqdm bar over the items.
    """
    if threads <= 1 or len(items) <= 1:
        return run_serial(fn, items, state, progress_bar)
    return run_parallel(fn, items, state, threads, progress_bar)
