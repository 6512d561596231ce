"""Deterministic reductions.

Sums are formed over fixed chunks of CHUNK_SIZE values; the chunk partials are
then combined in a fixed binary tree. The result depends only on the input
order, never on how many threads produced the chunk partials.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional

import numpy as np

CHUNK_SIZE = 4096


def _tree_reduce(partials: np.ndarray) -> np.ndarray:
    while partials.shape[0] > 1:
        if partials.shape[0] % 2:
            partials = np.concatenate([partials, np.zeros_like(partials[:1])])
        partials = partials[0::2] + partials[1::2]
    return partials[0]


def chunk_partials(
    values: np.ndarray,
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    threads: int = 1,
) -> np.ndarray:
    """Per-chunk sums of fn(values) (or values) along the first axis."""
    values = np.asarray(values)
    n = values.shape[0]
    bounds = [(lo, min(lo + CHUNK_SIZE, n)) for lo in range(0, n, CHUNK_SIZE)]

    def chunk_sum(bound):
        lo, hi = bound
        block = values[lo:hi]
        if fn is not None:
            block = fn(block)
        return np.sum(block, axis=0)

    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            partials = list(pool.map(chunk_sum, bounds))
    else:
        partials = [chunk_sum(b) for b in bounds]
    return np.asarray(partials)


def pairwise_sum(
    values: np.ndarray,
    fn: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    threads: int = 1,
):
    """Fixed-order pairwise sum of fn(values) along the first axis."""
    values = np.asarray(values)
    if values.shape[0] == 0:
        raise ValueError("cannot sum an empty array")
    return _tree_reduce(chunk_partials(values, fn, threads))


def pairwise_mean(values: np.ndarray, threads: int = 1) -> float:
    values = np.asarray(values, dtype=float)
    return float(pairwise_sum(values, threads=threads)) / values.shape[0]


def central_moments(values: np.ndarray, threads: int = 1) -> tuple[float, float, float]:
    """Mean, second and fourth central moments (population normalization)."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    mean = pairwise_mean(values, threads)

    def powers(block):
        d = block - mean
        d2 = d * d
        return np.stack([d2, d2 * d2], axis=-1)

    m2, m4 = pairwise_sum(values, powers, threads) / n
    return mean, float(m2), float(m4)
