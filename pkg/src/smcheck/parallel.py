"""Deterministic parallel replication executor.

Replications are dispatched to a fixed-size thread pool; every worker owns
its own simulator handle (created lazily via the factory and confined to
that worker).  Results are merged strictly in replication-index order, so
the outcome is identical to sequential execution regardless of worker count
or scheduling.
"""

from __future__ import annotations

import os
import threading
from concurrent.futures import ThreadPoolExecutor


class WorkerFailure(Exception):
    """A replication task raised; carries the failing index and partial results."""

    def __init__(self, index, cause, completed):
        self.index = index
        self.cause = cause
        self.completed = completed
        super().__init__(f"replication {index} failed: {cause}")


def default_workers() -> int:
    env = os.environ.get("SMCHECK_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValueError(f"SMCHECK_WORKERS must be an integer, got {env!r}") from None
        if n < 1:
            raise ValueError("SMCHECK_WORKERS must be >= 1")
        return n
    return os.cpu_count() or 1


class HandlePool:
    """Thread-local simulator handles: one per worker, never shared."""

    def __init__(self, factory):
        self._factory = factory
        self._local = threading.local()
        self._all = []
        self._lock = threading.Lock()

    def get(self):
        handle = getattr(self._local, "handle", None)
        if handle is None:
            handle = self._factory()
            self._local.handle = handle
            with self._lock:
                self._all.append(handle)
        return handle

    def close_all(self):
        with self._lock:
            handles, self._all = self._all, []
        for handle in handles:
            try:
                handle.close()
            except Exception:
                pass


def run_indexed(task, indices, pool: HandlePool, workers: int = 1) -> list:
    """Run ``task(index, handle)`` for every index; results in index order.

    Any task failure aborts the batch with a :class:`WorkerFailure` listing
    the replications that did complete.
    """
    indices = list(indices)
    if workers < 1:
        raise ValueError("workers must be >= 1")
    if workers == 1 or len(indices) <= 1:
        results = []
        for idx in indices:
            try:
                results.append(task(idx, pool.get()))
            except Exception as exc:
                raise WorkerFailure(idx, exc, dict(zip(indices, results))) from exc
        return results

    def run_one(idx):
        # pool.get() resolves inside the worker thread -> worker-local handle.
        return task(idx, pool.get())

    results: dict[int, object] = {}
    with ThreadPoolExecutor(max_workers=workers) as ex:
        futures = {ex.submit(run_one, idx): idx for idx in indices}
        error = None
        for fut, idx in futures.items():
            try:
                results[idx] = fut.result()
            except Exception as exc:
                if error is None:
                    error = (idx, exc)
        if error is not None:
            idx, exc = error
            raise WorkerFailure(idx, exc, results) from exc
    return [results[idx] for idx in indices]
