"""Batched embedding extraction with pacing, retries, and journaled resume.

Requests run on a bounded worker pool; a single writer places finished
batches at fixed row offsets in input order (completed batches wait in a
reorder buffer until their turn). Row indices reach the journal only after
their data is fsynced, so an interrupted run resumes by re-requesting
exactly the rows the journal does not list.
"""

from __future__ import annotations

import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import arec
from .journal import Journal, journal_path
from .providers import Provider, ProviderConfig, ProviderError
from .titles import TitleTable


class ExtractError(RuntimeError):
    """Extraction aborted; the journal still reflects every row on disk."""


@dataclass
class ExtractStats:
    rows_total: int
    rows_skipped: int
    rows_embedded: int
    provider_calls: int
    dim: int


class RateLimiter:
    """Spaces calls at least 1/rate seconds apart across all workers."""

    def __init__(self, rate: float):
        self.interval = 1.0 / rate if rate > 0 else 0.0
        self._lock = threading.Lock()
        self._next = 0.0

    def acquire(self) -> None:
        if self.interval == 0.0:
            return
        with self._lock:
            now = time.monotonic()
            start = max(now, self._next)
            self._next = start + self.interval
        delay = start - now
        if delay > 0:
            time.sleep(delay)


def _plan_batches(pending: list[int], batch_size: int) -> list[list[int]]:
    return [pending[k : k + batch_size] for k in range(0, len(pending), batch_size)]


def extract(
    table: TitleTable,
    provider: Provider,
    config: ProviderConfig,
    out_path: str | os.PathLike,
    *,
    concurrency: int = 4,
    backoff: float = 0.1,
) -> ExtractStats:
    """Embed every table row into `out_path`, resuming any previous attempt.

    A journal at `<out_path>.journal` lists rows already written; those are
    skipped. A journal without its data file is void and restarts the run.
    The sidecar (ids, titles, provider string) is written on completion.

    Raises ExtractError when the provider keeps failing (naming the first
    row of the failing batch), returns a wrong row count, changes dimension
    mid-run or across a resume, or produces non-finite values.
    """
    if concurrency < 1:
        raise ValueError(f"concurrency must be >= 1, got {concurrency}")
    n = table.rows
    out_path = os.fspath(out_path)
    journal = Journal(journal_path(out_path), config.tag)

    dim: int | None = None
    completed: set[int] = set()
    if os.path.exists(out_path):
        rows, dim = arec.read_header(out_path)
        if rows != n:
            raise ExtractError(
                f"{out_path} holds {rows} rows but the titles table has {n}; "
                "it belongs to a different input"
            )
        completed = journal.load()
        if completed and max(completed) >= n:
            raise ExtractError(f"{journal.path} lists row {max(completed)} beyond the table")

    pending = sorted(set(range(n)) - completed)
    comment = f"provider: {config.tag}"
    if not pending:
        arec.write_sidecar(out_path, table.ids, table.titles, comment)
        return ExtractStats(n, n, 0, 0, int(dim))

    limiter = RateLimiter(config.rate_limit)
    batches = _plan_batches(pending, config.batch_size)

    def run_batch(batch_rows: list[int]) -> np.ndarray:
        texts = [table.titles[i] for i in batch_rows]
        attempt = 0
        while True:
            limiter.acquire()
            try:
                return np.asarray(provider.embed(texts))
            except ProviderError as exc:
                if attempt >= config.max_retries:
                    raise ExtractError(
                        f"provider failed at row {batch_rows[0]} "
                        f"after {attempt + 1} attempts: {exc}"
                    ) from exc
                time.sleep(backoff * (2.0**attempt))
                attempt += 1

    calls_before = provider.calls
    fresh = dim is None
    journal.open_for_append(fresh=fresh)
    data_fh = None if fresh else open(out_path, "r+b")
    pool = ThreadPoolExecutor(max_workers=concurrency)
    try:
        futures = [pool.submit(run_batch, b) for b in batches]
        for batch_rows, fut in zip(batches, futures):
            vecs = fut.result()
            if vecs.ndim != 2 or vecs.shape[0] != len(batch_rows):
                raise ExtractError(
                    f"provider returned shape {vecs.shape} for {len(batch_rows)} "
                    f"texts (batch at row {batch_rows[0]})"
                )
            if dim is None:
                dim = int(vecs.shape[1])
                arec.allocate(out_path, n, dim)
                data_fh = open(out_path, "r+b")
            elif vecs.shape[1] != dim:
                raise ExtractError(
                    f"dimension drift at row {batch_rows[0]}: "
                    f"provider returned {vecs.shape[1]}, file holds {dim}"
                )
            bad = ~np.isfinite(np.asarray(vecs, dtype=np.float64))
            if bad.any():
                r = batch_rows[int(np.argwhere(bad)[0][0])]
                raise ExtractError(
                    f"non-finite embedding value for row {r} (id {table.ids[r]!r})"
                )
            arec.write_rows(data_fh, batch_rows, vecs, dim)
            data_fh.flush()
            os.fsync(data_fh.fileno())
            journal.record(batch_rows)
    finally:
        pool.shutdown(wait=True, cancel_futures=True)
        if data_fh is not None:
            data_fh.close()
        journal.close()

    arec.write_sidecar(out_path, table.ids, table.titles, comment)
    return ExtractStats(
        rows_total=n,
        rows_skipped=len(completed),
        rows_embedded=len(pending),
        provider_calls=provider.calls - calls_before,
        dim=int(dim),
    )
