"""Classical Monte-Carlo baseline: inverse-CDF sampling, mean estimates, RMSE.

Cost is counted in abstract word-level operations.  One sample costs
``n + ceil(log2(1 / eps_target))`` operations: ``n`` comparisons for the
binary search over ``2**n`` cells plus the bits needed to resolve the
target accuracy.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .distributions import DiscretizedDistribution
from .rng import derive_seed, make_rng
from .stats import BOOTSTRAP_RESAMPLES, bootstrap_indices, parallel_map

CHUNK = 1 << 20
GUIDE_FACTOR = 16
MAX_GUIDE = 1 << 22

ESTIMATORS = ("ClassicalMean", "PlBinomial", "QuantumMLAE", "GRPipeline")


def ops_per_sample(n: int, eps_target: float) -> int:
    extra = math.ceil(math.log2(1.0 / eps_target)) if eps_target < 1 else 0
    return n + extra


@dataclass(frozen=True)
class CostLedger:
    samples_drawn: int
    bits_per_sample: int
    ops_per_sample: int

    @classmethod
    def for_samples(cls, samples: int, n: int, eps_target: float) -> "CostLedger":
        ops = ops_per_sample(n, eps_target)
        return cls(samples, ops, ops)

    @property
    def cost_units(self) -> int:
        return self.samples_drawn * self.ops_per_sample


@dataclass(frozen=True)
class EstimateRecord:
    estimator: str
    estimate: float
    true_value: float
    queries_or_samples: int
    cost_units: int
    seed: int
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if self.estimator not in ESTIMATORS:
            raise ValueError(f"unknown estimator {self.estimator!r}")
        if self.queries_or_samples < 1:
            raise ValueError("queries_or_samples must be >= 1")
        if self.cost_units < self.queries_or_samples:
            raise ValueError("cost_units must be >= queries_or_samples")

    @property
    def sq_error(self) -> float:
        return (self.estimate - self.true_value) ** 2


class Sampler:
    """Inverse-CDF sampler over a discretized pmf.

    Draw ``u ~ U[0, 1)`` and return the smallest ``i`` with ``cdf[i] > u``.
    :meth:`sample` does this with a plain binary search.  The bulk methods
    return exactly the same indices for the same uniforms, but first jump
    into a guide table so most lookups need no search at all.
    """

    def __init__(self, disc: DiscretizedDistribution):
        self.size = disc.size
        cdf = np.cumsum(disc.probs)
        cdf[-1] = 1.0
        self.cdf = cdf
        self._cdf_list = cdf.tolist()
        self._guide_size = min(GUIDE_FACTOR * self.size, MAX_GUIDE)
        g = np.arange(self._guide_size) / self._guide_size
        self._guide = np.searchsorted(cdf, g, side="right")
        self._guide_next = np.append(self._guide[1:], self.size - 1)

    def sample(self, rng: np.random.Generator) -> int:
        return min(bisect.bisect_right(self._cdf_list, rng.random()), self.size - 1)

    def inverse_cdf(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        bucket = (u * self._guide_size).astype(np.int64)
        idx = self._guide[bucket]
        ambiguous = np.flatnonzero(self._guide_next[bucket] > idx)
        idx[ambiguous] = np.searchsorted(self.cdf, u[ambiguous], side="right")
        return np.minimum(idx, self.size - 1)

    def _uniform_chunks(self, rng: np.random.Generator, size: int):
        remaining = size
        while remaining > 0:
            k = min(remaining, CHUNK)
            yield rng.random(k)
            remaining -= k

    def sample_many(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if size <= 0:
            return np.empty(0, dtype=np.int64)
        return np.concatenate([self.inverse_cdf(u) for u in self._uniform_chunks(rng, size)])

    def sum_indices(self, rng: np.random.Generator, size: int) -> int:
        """Sum of ``size`` sampled indices, without keeping the samples."""
        return int(sum(int(self.inverse_cdf(u).sum()) for u in self._uniform_chunks(rng, size)))

    def count_below(self, rng: np.random.Generator, size: int, split: int) -> int:
        """How many of ``size`` draws have index ``< split``.

        Since the inverse CDF is monotone, ``index < split`` is the same
        event as ``u < cdf[split - 1]``; no per-draw search is needed.
        """
        if split <= 0:
            return 0
        if split >= self.size:
            return size
        edge = self.cdf[split - 1]
        return int(sum(int(np.count_nonzero(u < edge)) for u in self._uniform_chunks(rng, size)))


def sample(disc: DiscretizedDistribution, rng: np.random.Generator) -> int:
    return Sampler(disc).sample(rng)


def estimate_mean(disc: DiscretizedDistribution, n_samples: int, seed: int,
                  eps_target: float | None = None, sampler: Sampler | None = None,
                  true_value: float | None = None) -> EstimateRecord:
    """Sample average of ``n_samples`` draws (index units).

    ``eps_target`` sets the per-sample cost; it defaults to ``1/sqrt(n_samples)``,
    the accuracy that many samples deliver.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    sampler = sampler or Sampler(disc)
    total = sampler.sum_indices(make_rng(seed), n_samples)
    if eps_target is None:
        eps_target = 1.0 / math.sqrt(n_samples)
    if true_value is None:
        true_value = float(np.dot(np.arange(disc.size, dtype=float), disc.probs))
    ledger = CostLedger.for_samples(n_samples, disc.n, eps_target)
    return EstimateRecord("ClassicalMean", total / n_samples, true_value, n_samples, ledger.cost_units, seed)


@dataclass(frozen=True)
class RmseResult:
    rmse: float
    stderr: float
    sq_errors: np.ndarray = field(repr=False)
    records: tuple = field(default=(), repr=False)


def rmse_study(estimator: Callable[[int], "float | EstimateRecord"], true_value: float,
               repetitions: int, seed: int, resamples: int = BOOTSTRAP_RESAMPLES,
               threads: int = 1) -> RmseResult:
    """RMSE of ``estimator`` over ``repetitions`` independently seeded runs.

    ``estimator`` receives a per-repetition seed and returns an estimate or
    an :class:`EstimateRecord`.  The standard error is a bootstrap over
    repetitions.
    """
    if repetitions < 30:
        raise ValueError("rmse_study needs at least 30 repetitions")
    seeds = [derive_seed(seed, 0, r) for r in range(repetitions)]
    outputs = parallel_map(estimator, seeds, threads)
    records = tuple(o for o in outputs if isinstance(o, EstimateRecord))
    estimates = np.array([o.estimate if isinstance(o, EstimateRecord) else float(o) for o in outputs])
    sq = (estimates - true_value) ** 2
    idx = bootstrap_indices(make_rng(derive_seed(seed, 1)), repetitions, resamples)
    boot = np.sqrt(sq[idx].mean(axis=1))
    return RmseResult(float(np.sqrt(sq.mean())), float(boot.std(ddof=1)), sq, records)


def sampling_inflation_bounds(discrete_mean: float, eps_s_max: float) -> tuple[float, float]:
    """Range of the sampled mean when every cell mass errs by at most ``eps_s_max``.

    The exact inverse-CDF sampler has ``eps_s_max = 0``; this reports what an
    approximate sampler would allow.
    """
    return (1.0 - eps_s_max) * discrete_mean, (1.0 + eps_s_max) * discrete_mean


def bias_floor(eps_d_max: float, eps_s_max: float) -> float:
    """MSE floor ``(eps_d + eps_s)**2`` that no number of samples removes."""
    return (eps_d_max + eps_s_max) ** 2
