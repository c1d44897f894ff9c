"""Noiseless amplitude-estimation mean estimation, simulated at the outcome level.

The mean of the encoded pmf is mapped to a good-state probability
``a = sum_i p_i * i / (2**n - 1)``.  Running ``m`` Grover iterates and
measuring yields the good state with probability ``sin^2((2m+1) theta_a)``,
``a = sin^2(theta_a)``.  Maximum-likelihood amplitude estimation (MLAE)
combines the shot counts of several depths; each shot at depth ``m`` costs
``2m + 1`` queries to the state-preparation circuit.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from .classical_mc import EstimateRecord
from .grover_rudolph import PreparedState
from .rng import make_rng

GRID_POINTS = 100_000
GOLDEN_TOL = 1e-12
TIE_TOL = 1e-12
BATCH = 64
STATE_PREP_UNITS = 0

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0
_TINY = 1e-300


class AllocationInfeasible(ValueError):
    """The query budget is smaller than the cheapest schedule."""


@dataclass(frozen=True)
class AmplitudeTarget:
    a: float
    theta_a: float

    @classmethod
    def from_probability(cls, a: float) -> "AmplitudeTarget":
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"amplitude probability {a} outside [0, 1]")
        return cls(a, math.asin(math.sqrt(a)))


@dataclass(frozen=True)
class MlaeSchedule:
    depths: tuple[int, ...]
    shots: int

    def __post_init__(self):
        if self.shots < 1 or not self.depths or min(self.depths) < 0:
            raise ValueError("schedule needs shots >= 1 and non-negative depths")
        object.__setattr__(self, "depths", tuple(int(m) for m in self.depths))

    @classmethod
    def exponential(cls, k: int, shots: int) -> "MlaeSchedule":
        """Depths ``0, 1, 2, 4, ..., 2**(k-1)``."""
        return cls((0,) + tuple(1 << j for j in range(k)), shots)

    @classmethod
    def for_budget(cls, n_queries: int, shots: int) -> "MlaeSchedule":
        """Deepest exponential schedule whose query count fits in ``n_queries``."""
        if shots > n_queries:
            raise AllocationInfeasible(f"budget {n_queries} below the {shots} queries of one depth")
        k = 0
        while cls.exponential(k + 1, shots).n_queries <= n_queries:
            k += 1
        return cls.exponential(k, shots)

    @property
    def n_queries(self) -> int:
        return self.shots * sum(2 * m + 1 for m in self.depths)


def mean_to_amplitude(state: PreparedState) -> AmplitudeTarget:
    size = state.amps.size
    if size < 2:
        raise ValueError("need at least one qubit")
    weights = np.arange(size, dtype=float) / (size - 1)
    a = float(np.dot(state.probs, weights))
    return AmplitudeTarget.from_probability(min(max(a, 0.0), 1.0))


def grover_outcome_prob(t: AmplitudeTarget, m: int) -> float:
    if m < 0:
        raise ValueError("depth must be >= 0")
    return math.sin((2 * m + 1) * t.theta_a) ** 2


def fisher_rmse(a: float, sched: MlaeSchedule) -> float:
    """Cramér-Rao standard deviation of ``a_hat`` for the schedule."""
    info = sched.shots * sum((2 * m + 1) ** 2 for m in sched.depths)
    return math.sqrt(a * (1.0 - a) / info)


@functools.lru_cache(maxsize=16)
def _grid_tables(depths: tuple[int, ...], grid_points: int):
    theta = np.linspace(0.0, math.pi / 2, grid_points)
    mult = 2 * np.asarray(depths, dtype=float)[:, None] + 1
    s2 = np.sin(mult * theta) ** 2
    log_s = np.log(np.maximum(s2, _TINY))
    log_c = np.log(np.maximum(1.0 - s2, _TINY))
    return theta, log_s, log_c


def _loglik(theta: np.ndarray, hits: np.ndarray, misses: np.ndarray, depths) -> np.ndarray:
    mult = 2 * np.asarray(depths, dtype=float) + 1
    s2 = np.sin(theta[:, None] * mult) ** 2
    return (hits * np.log(np.maximum(s2, _TINY)) + misses * np.log(np.maximum(1.0 - s2, _TINY))).sum(axis=1)


def mlae_theta(hits, sched: MlaeSchedule, grid_points: int = GRID_POINTS):
    """Maximum-likelihood ``theta`` for each row of ``hits`` (shape ``(B, D)``).

    Grid search over ``[0, pi/2]`` (leftmost maximum on ties) followed by
    golden-section refinement within one grid step.  Counts may be
    fractional.  Returns ``(theta_hat, tie_flags)``.
    """
    hits = np.atleast_2d(np.asarray(hits, dtype=float))
    misses = sched.shots - hits
    theta_grid, log_s, log_c = _grid_tables(sched.depths, grid_points)
    step = theta_grid[1] - theta_grid[0]

    best = np.empty(hits.shape[0])
    ties = np.zeros(hits.shape[0], dtype=bool)
    for start in range(0, hits.shape[0], BATCH):
        h, mi = hits[start:start + BATCH], misses[start:start + BATCH]
        ll = h @ log_s + mi @ log_c
        top = ll.argmax(axis=1)
        best[start:start + BATCH] = theta_grid[top]
        near = ll >= ll[np.arange(ll.shape[0]), top][:, None] - TIE_TOL
        runs = near[:, 0].astype(int) + (near[:, 1:] & ~near[:, :-1]).sum(axis=1)
        ties[start:start + BATCH] = runs > 1

    lo = np.maximum(best - step, 0.0)
    hi = np.minimum(best + step, math.pi / 2)
    x1 = hi - _INVPHI * (hi - lo)
    x2 = lo + _INVPHI * (hi - lo)
    f1 = _loglik(x1, hits, misses, sched.depths)
    f2 = _loglik(x2, hits, misses, sched.depths)
    while np.max(hi - lo) > GOLDEN_TOL:
        left = f1 >= f2
        lo, hi = np.where(left, lo, x1), np.where(left, x2, hi)
        probe = np.where(left, hi - _INVPHI * (hi - lo), lo + _INVPHI * (hi - lo))
        f_probe = _loglik(probe, hits, misses, sched.depths)
        x1, x2, f1, f2 = (
            np.where(left, probe, x2),
            np.where(left, x1, probe),
            np.where(left, f_probe, f2),
            np.where(left, f1, f_probe),
        )
    theta = 0.5 * (lo + hi)

    # the optimum may sit on a bracket end (e.g. theta = 0 when nothing was hit)
    candidates = np.stack([theta, lo, hi])
    scores = np.stack([_loglik(c, hits, misses, sched.depths) for c in candidates])
    theta = candidates[scores.argmax(axis=0), np.arange(theta.size)]
    return theta, ties


def simulate_hits(a: float, sched: MlaeSchedule, rng: np.random.Generator) -> np.ndarray:
    t = AmplitudeTarget.from_probability(a)
    probs = [grover_outcome_prob(t, m) for m in sched.depths]
    return rng.binomial(sched.shots, probs).astype(float)


def mlae_many(amplitudes, sched: MlaeSchedule, seeds) -> tuple[np.ndarray, np.ndarray]:
    """MLAE estimates of each amplitude in ``amplitudes``, one seed per run."""
    hits = np.array([simulate_hits(a, sched, make_rng(s)) for a, s in zip(amplitudes, seeds)])
    theta, ties = mlae_theta(hits.reshape(len(seeds), len(sched.depths)), sched)
    return np.sin(theta) ** 2, ties


def mlae_estimate(t: AmplitudeTarget, sched: MlaeSchedule, seed: int) -> EstimateRecord:
    a_hat, ties = mlae_many([t.a], sched, [seed])
    flags = ("likelihood-tie",) if ties[0] else ()
    n_q = sched.n_queries
    return EstimateRecord("QuantumMLAE", float(a_hat[0]), t.a, n_q, n_q, seed, flags)


def mlae_trace(t: AmplitudeTarget, sched: MlaeSchedule, seed: int) -> list[tuple[int, int, int]]:
    """Shot-level ``(depth, hits, shots)`` rows of the run ``mlae_estimate`` would make."""
    hits = simulate_hits(t.a, sched, make_rng(seed))
    return [(m, int(h), sched.shots) for m, h in zip(sched.depths, hits)]


def query_cost(sched: MlaeSchedule, state_prep_units: int = STATE_PREP_UNITS) -> int:
    return sched.n_queries * (1 + state_prep_units)


def qmc_mean(state: PreparedState, sched: MlaeSchedule, seed: int,
             true_value: float | None = None) -> EstimateRecord:
    """Estimate the index-domain mean of ``state`` with MLAE.

    For an erroneous state the estimand is that state's own mean; pass
    ``true_value`` to score against another target (e.g. the exact mean).
    """
    scale = state.amps.size - 1
    rec = mlae_estimate(mean_to_amplitude(state), sched, seed)
    return EstimateRecord(
        "QuantumMLAE",
        rec.estimate * scale,
        state.mean() if true_value is None else true_value,
        rec.queries_or_samples,
        query_cost(sched),
        seed,
        rec.flags,
    )
