"""Row-block scheduling with thread-count independent reductions.

Every N-length pass is split into fixed-size row blocks.  Per-block partial
results are combined with a fixed pairwise tree, so the floating point
result depends only on ``block_rows`` and never on how many worker threads
computed the partials.  BLAS is pinned to one thread inside the pool so a
block's own partial is computed identically whichever worker runs it.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

from threadpoolctl import threadpool_limits

from .errors import DenseCapError

T = TypeVar("T")

BLOCK_ROWS = 4096
DEFAULT_DENSE_CAP = 4000
DENSE_CAP_ENV = "ALPHACOMB_DENSE_CAP"


def dense_cap(override: int | None = None) -> int:
    """Maximum N allowed on O(N^2) oracle paths (argument, then env, then default)."""
    if override is not None:
        cap = int(override)
    else:
        cap = int(os.environ.get(DENSE_CAP_ENV, DEFAULT_DENSE_CAP))
    if cap < 2:
        raise ValueError(f"dense cap must be >= 2, got {cap}")
    return cap


def check_dense(n: int, what: str, cap: int | None = None) -> None:
    limit = dense_cap(cap)
    if n > limit:
        raise DenseCapError(
            f"{what} needs an N x N matrix but N={n} exceeds the dense-oracle cap "
            f"{limit} (raise it with --dense-cap or {DENSE_CAP_ENV})"
        )


def row_blocks(n: int, block_rows: int = BLOCK_ROWS) -> list[slice]:
    if block_rows < 1:
        raise ValueError("block_rows must be positive")
    return [slice(lo, min(lo + block_rows, n)) for lo in range(0, n, block_rows)]


def default_threads() -> int:
    return max(1, min(8, os.cpu_count() or 1))


def map_blocks(
    fn: Callable[[slice], T],
    n: int,
    threads: int | None = None,
    block_rows: int = BLOCK_ROWS,
) -> list[T]:
    """Apply ``fn`` to every row block, returning results in block order."""
    blocks = row_blocks(n, block_rows)
    threads = default_threads() if threads is None else int(threads)
    if threads < 1:
        raise ValueError("threads must be >= 1")
    with threadpool_limits(limits=1, user_api="blas"):
        if threads == 1 or len(blocks) == 1:
            return [fn(b) for b in blocks]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, blocks))


def tree_sum(parts: Sequence[T]) -> T:
    """Pairwise reduction in a fixed shape determined only by ``len(parts)``."""
    if not parts:
        raise ValueError("nothing to reduce")
    level = list(parts)
    while len(level) > 1:
        nxt = [level[k] + level[k + 1] for k in range(0, len(level) - 1, 2)]
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0]
