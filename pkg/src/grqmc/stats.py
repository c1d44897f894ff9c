"""Bootstrap helpers shared by the estimators and the experiment harness."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

BOOTSTRAP_RESAMPLES = 1000

T = TypeVar("T")


def bootstrap_indices(rng: np.random.Generator, n: int, resamples: int = BOOTSTRAP_RESAMPLES) -> np.ndarray:
    return rng.integers(0, n, size=(resamples, n))


def bootstrap_se(values, statistic: Callable[[np.ndarray], float], rng: np.random.Generator,
                 resamples: int = BOOTSTRAP_RESAMPLES) -> float:
    """Bootstrap standard error of ``statistic`` over the first axis of ``values``."""
    values = np.asarray(values)
    idx = bootstrap_indices(rng, values.shape[0], resamples)
    reps = np.array([statistic(values[i]) for i in idx])
    return float(reps.std(ddof=1))


def bootstrap_se_mean(values, rng: np.random.Generator, resamples: int = BOOTSTRAP_RESAMPLES) -> float:
    """Vectorized bootstrap standard error of a sample mean."""
    values = np.asarray(values, dtype=float)
    idx = bootstrap_indices(rng, values.size, resamples)
    return float(values[idx].mean(axis=1).std(ddof=1))


def parallel_map(fn: Callable[[int], T], items: Sequence[int], threads: int = 1) -> list[T]:
    """Ordered map; results never depend on ``threads``."""
    if threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))
