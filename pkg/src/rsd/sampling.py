"""Reproducible Gaussian replicate streams.

Replicates are generated in fixed-size blocks. Block ``b`` of stream
``key`` is drawn from ``SeedSequence([seed, *key, b])``, so replicate ``i``
depends only on (seed, key, i) and never on how blocks are scheduled.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .gaussian import CovarianceModel

BLOCK = 4096
T = TypeVar("T")


def default_workers() -> int:
    raw = os.environ.get("RSD_THREADS")
    if not raw:
        return 1
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def block_sizes(reps: int) -> list[int]:
    full, rest = divmod(reps, BLOCK)
    return [BLOCK] * full + ([rest] if rest else [])


def draw_block(model: CovarianceModel, theta: ArrayLike, seed: int, key: Sequence[int], b: int, size: int) -> NDArray:
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, key), int(b)]))
    Z = rng.standard_normal((size, model.n))
    return np.asarray(theta, dtype=float) + Z @ model.chol.T


def map_blocks(
    model: CovarianceModel,
    theta: ArrayLike,
    reps: int,
    seed: int,
    key: Sequence[int],
    fn: Callable[[NDArray], T],
    workers: int | None = None,
) -> list[T]:
    """Apply ``fn`` to every replicate block; results come back in block order."""
    sizes = block_sizes(reps)
    workers = default_workers() if workers is None else max(1, int(workers))

    def job(b: int) -> T:
        return fn(draw_block(model, theta, seed, key, b, sizes[b]))

    if workers == 1 or len(sizes) == 1:
        return [job(b) for b in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, range(len(sizes))))
