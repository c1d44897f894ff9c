"""Sweeps that compare exact-prep QMC, the Grover-Rudolph pipeline and classical MC.

Three arms share one accuracy grid ``targets``:

``exact``
    MLAE on the exactly prepared state; cost is the query count ``N_q``.
``pipeline``
    The first Grover-Rudolph angle comes from ``N'_s`` classical samples,
    then MLAE runs on the resulting erroneous state.  Cost is
    ``N'_s * ops_per_sample + N_q``.
``classical``
    Plain sample mean of ``N_s`` draws; cost ``N_s * ops_per_sample``.

For a target ``eps`` the allocation is ``N'_s = N_s = ceil(c_s / eps**2)`` and
a query budget ``ceil(c_q / eps)``, spent on the deepest exponential MLAE
schedule that fits.  Errors are measured against the exact mean of the
discretized pmf, in index units.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .classical_mc import Sampler, estimate_mean, ops_per_sample
from .distributions import (
    DEFAULT_TAIL_TOL,
    DiscretizedDistribution,
    discretize,
    exact_mean,
    half_gap_k,
    left_mass,
    truncate,
)
from .grover_rudolph import exact_state, mc_first_angle, perturb_first_iteration
from .quantum_mc import AllocationInfeasible, MlaeSchedule, mean_to_amplitude, mlae_many, query_cost
from .rng import DEFAULT_SEED, derive_seed, make_rng
from .stats import BOOTSTRAP_RESAMPLES, bootstrap_indices, parallel_map

ARMS = ("exact", "pipeline", "classical")
_ARM_KEY = {arm: i for i, arm in enumerate(ARMS)}


class InsufficientSpanError(ValueError):
    """Too few points, or too narrow a range, for a meaningful slope fit."""


class InfeasibleBudget(ValueError):
    """The total cost cannot pay for one sample and one query."""


def _ceil(x: float) -> int:
    # guard against 1/(10**-1.5)**2 = 1000.0000000000002
    return max(1, math.ceil(x - 1e-9 * max(1.0, x)))


@dataclass(frozen=True)
class SweepConfig:
    family: str = "normal"
    params: tuple[tuple[str, float], ...] = ()
    tail_tol: float = DEFAULT_TAIL_TOL
    n: int = 10
    targets: tuple[float, ...] = tuple(10.0 ** (-e / 4) for e in range(4, 13))
    repetitions: int = 400
    c_s: float = 1.0
    c_q: float = 1.0
    shots: int = 100
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        t = tuple(float(x) for x in self.targets)
        if any(b >= a for a, b in zip(t, t[1:])):
            raise ValueError("targets must be strictly decreasing")
        if any(x <= 0 for x in t):
            raise ValueError("targets must be positive")
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "params", tuple(sorted((k, float(v)) for k, v in dict(self.params).items())))

    def distribution(self) -> DiscretizedDistribution:
        return discretize(truncate(self.family, dict(self.params), self.tail_tol), self.n)

    def prep_samples(self, target: float) -> int:
        return _ceil(self.c_s / target**2)

    def schedule(self, target: float) -> MlaeSchedule:
        return MlaeSchedule.for_budget(_ceil(self.c_q / target), self.shots)

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class ScalingRow:
    target: float
    n_prep_samples: int
    n_queries: int
    cost_units: int
    rmse: float
    stderr: float
    sq_errors: np.ndarray = field(repr=False, compare=False)


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    ci95: tuple[float, float]


@dataclass(frozen=True)
class ScalingReport:
    arm: str
    rows: tuple[ScalingRow, ...]
    fit: SlopeFit
    config_hash: str
    flags: tuple[str, ...] = ()

    @property
    def slope(self) -> float:
        return self.fit.slope

    @property
    def ci95(self) -> tuple[float, float]:
        return self.fit.ci95


def fit_loglog_slope(costs, rmses, sq_errors=None, seed: int = DEFAULT_SEED,
                     resamples: int = BOOTSTRAP_RESAMPLES) -> SlopeFit:
    """OLS slope of ``log10 rmse`` against ``log10 cost``.

    With per-point squared errors the 95% interval comes from resampling
    repetitions within every point and refitting; without them it collapses
    to the point estimate.
    """
    x = np.log10(np.asarray(costs, dtype=float))
    y = np.log10(np.asarray(rmses, dtype=float))
    if x.size < 4:
        raise InsufficientSpanError(f"need at least 4 points, got {x.size}")
    if x.max() - x.min() < 2.0 - 1e-12:
        raise InsufficientSpanError(f"cost spans {x.max() - x.min():.2f} decades, need 2")
    xc = x - x.mean()
    slope = float(xc @ (y - y.mean()) / (xc @ xc))
    intercept = float(y.mean() - slope * x.mean())
    if sq_errors is None:
        return SlopeFit(slope, intercept, (slope, slope))

    rng = make_rng(derive_seed(seed, 2))
    boot_y = np.empty((resamples, x.size))
    for j, sq in enumerate(sq_errors):
        sq = np.asarray(sq, dtype=float)
        idx = bootstrap_indices(rng, sq.size, resamples)
        boot_y[:, j] = 0.5 * np.log10(sq[idx].mean(axis=1))
    boot = (boot_y - boot_y.mean(axis=1, keepdims=True)) @ xc / (xc @ xc)
    lo, hi = np.percentile(boot, [2.5, 97.5])
    return SlopeFit(slope, intercept, (float(lo), float(hi)))


def _row(target, n_prep, n_queries, cost, sq, seed) -> ScalingRow:
    sq = np.asarray(sq, dtype=float)
    idx = bootstrap_indices(make_rng(derive_seed(seed, 1)), sq.size)
    se = float(np.sqrt(sq[idx].mean(axis=1)).std(ddof=1))
    return ScalingRow(target, n_prep, n_queries, cost, float(np.sqrt(sq.mean())), se, sq)


def pipeline_rmse(config: SweepConfig, point: int, arm: str = "pipeline",
                  disc: DiscretizedDistribution | None = None, threads: int = 1) -> ScalingRow:
    """One grid point of the ``exact``, ``pipeline`` or ``classical`` arm."""
    if arm not in ARMS:
        raise ValueError(f"unknown arm {arm!r}")
    disc = disc or config.distribution()
    target = config.targets[point]
    mu = exact_mean(disc)
    reps = config.repetitions
    point_seed = derive_seed(config.seed, _ARM_KEY[arm], point)
    rep_seeds = [derive_seed(point_seed, 0, r) for r in range(reps)]
    sampler = Sampler(disc)
    ops = ops_per_sample(disc.n, target)

    if arm == "classical":
        n_s = config.prep_samples(target)
        records = parallel_map(lambda s: estimate_mean(disc, n_s, s, target, sampler, mu), rep_seeds, threads)
        sq = [r.sq_error for r in records]
        return _row(target, n_s, 0, records[0].cost_units, sq, point_seed)

    sched = config.schedule(target)
    scale = disc.size - 1
    if arm == "exact":
        n_prep = 0
        amplitudes = [mean_to_amplitude(exact_state(disc)).a] * reps
    else:
        n_prep = config.prep_samples(target)

        def prep(s):
            err = mc_first_angle(disc, n_prep, derive_seed(s, 0), sampler)
            return mean_to_amplitude(perturb_first_iteration(disc, err)).a

        amplitudes = parallel_map(prep, rep_seeds, threads)
    a_hat, _ = mlae_many(amplitudes, sched, [derive_seed(s, 1) for s in rep_seeds])
    sq = (a_hat * scale - mu) ** 2
    cost = n_prep * ops + query_cost(sched)
    return _row(target, n_prep, sched.n_queries, cost, sq, point_seed)


def run_arm(config: SweepConfig, arm: str, threads: int = 1) -> ScalingReport:
    disc = config.distribution()
    rows, flags = [], []
    for point in range(len(config.targets)):
        try:
            rows.append(pipeline_rmse(config, point, arm, disc, threads))
        except AllocationInfeasible as exc:
            flags.append(f"target {config.targets[point]!r} skipped: {exc}")
    x_key = (lambda r: r.n_queries) if arm == "exact" else (lambda r: r.cost_units)
    fit = fit_loglog_slope([x_key(r) for r in rows], [r.rmse for r in rows],
                           [r.sq_errors for r in rows], seed=derive_seed(config.seed, _ARM_KEY[arm]))
    return ScalingReport(arm, tuple(rows), fit, config.digest(), tuple(flags))


def cost_ratio_at_equal_rmse(report: ScalingReport, baseline: ScalingReport) -> np.ndarray:
    """``report`` cost over the baseline's cost at the same RMSE, per row of ``report``.

    The baseline cost at a given RMSE is read off a straight-line fit of
    ``log cost`` against ``log rmse``.
    """
    bx = np.log10([r.rmse for r in baseline.rows])
    by = np.log10([r.cost_units for r in baseline.rows])
    b, a = np.polyfit(bx, by, 1)
    rx = np.log10([r.rmse for r in report.rows])
    predicted = 10 ** (a + b * rx)
    return np.array([r.cost_units for r in report.rows]) / predicted


@dataclass(frozen=True)
class Decomposition:
    lhs: float
    rhs: float
    cross: float
    lhs_se: float
    rhs_se: float
    cross_se: float
    k: float
    mean_sq_eps: float

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)


def decomposition_check(disc: DiscretizedDistribution, n_prep: int, sched: MlaeSchedule,
                        reps: int, seed: int, zero_eps: bool = False, exact_qmc: bool = False,
                        threads: int = 1) -> Decomposition:
    """Split the pipeline MSE into QMC error and state-prep error.

    Per repetition: draw ``eps_l`` from ``n_prep`` samples, prepare the
    erroneous state with mean ``mu'``, estimate it with MLAE.  Returns
    ``lhs = E[(mu - mu_hat)^2]``, ``rhs = E[(mu' - mu_hat)^2] + k^2 E[eps_l^2]``
    and ``cross = 2k E[eps_l (mu' - mu_hat)]``, each with a bootstrap
    standard error.  ``zero_eps`` forces ``eps_l = 0``; ``exact_qmc``
    replaces MLAE by ``mu_hat = mu'``.
    """
    mu = exact_mean(disc)
    k = half_gap_k(disc)
    scale = disc.size - 1
    sampler = Sampler(disc)
    rep_seeds = [derive_seed(seed, 0, r) for r in range(reps)]

    def prep(s):
        if zero_eps:
            return 0.0, mu
        err = mc_first_angle(disc, n_prep, derive_seed(s, 0), sampler)
        return err.epsilon_l, perturb_first_iteration(disc, err).mean()

    eps, mu_prime = (np.array(v) for v in zip(*parallel_map(prep, rep_seeds, threads)))
    if exact_qmc:
        mu_hat = mu_prime.copy()
    else:
        a_hat, _ = mlae_many(mu_prime / scale, sched, [derive_seed(s, 1) for s in rep_seeds])
        mu_hat = a_hat * scale

    qmc_sq = (mu_prime - mu_hat) ** 2
    total_sq = (mu - mu_hat) ** 2
    cross_terms = 2.0 * k * eps * (mu_prime - mu_hat)
    prep_sq = k**2 * eps**2

    idx = bootstrap_indices(make_rng(derive_seed(seed, 1)), reps)

    def se(values):
        return float(values[idx].mean(axis=1).std(ddof=1))

    return Decomposition(
        lhs=float(total_sq.mean()),
        rhs=float(qmc_sq.mean() + prep_sq.mean()),
        cross=float(cross_terms.mean()),
        lhs_se=se(total_sq),
        rhs_se=se(qmc_sq + prep_sq),
        cross_se=se(cross_terms),
        k=k,
        mean_sq_eps=float((eps**2).mean()),
    )


def mlae_constant(a: float, shots: int, scale: float = 1.0) -> float:
    """Asymptotic ``MSE * N_q**2`` of MLAE with exponential depths.

    From the Fisher information of the schedule:
    ``(sum (2m+1))**2 / sum (2m+1)**2 -> 3`` as the depth grows.
    """
    return 3.0 * shots * a * (1.0 - a) * scale**2


def balanced_c_q(disc: DiscretizedDistribution, c_s: float = 1.0, shots: int = 100) -> float:
    """Query constant at which MLAE and state-prep contribute equal MSE.

    With ``N'_s = c_s / eps**2`` and ``N_q = c_q / eps`` the two terms
    ``c1 / N_q**2`` and ``k**2 p_l (1 - p_l) / N'_s`` both scale as
    ``eps**2``; equating them fixes ``c_q``.
    """
    p = left_mass(disc)
    prep = half_gap_k(disc) ** 2 * p * (1.0 - p)
    if prep <= 0:
        raise ValueError("no state-prep error term to balance against")
    c1 = mlae_constant(mean_to_amplitude(exact_state(disc)).a, shots, disc.size - 1)
    return math.sqrt(c1 * c_s / prep)


@dataclass(frozen=True)
class Allocation:
    n_prep: int
    n_queries: int
    fraction: float
    predicted_mse: float
    prep_term: float
    qmc_term: float


def predicted_mse(n_prep, n_queries, k: float, p_left: float, c1: float):
    n_prep = np.asarray(n_prep, dtype=float)
    n_queries = np.asarray(n_queries, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        qmc = np.where(n_queries >= 1, c1 / n_queries**2, np.inf)
        if k == 0:
            prep = np.zeros_like(n_prep)
        else:
            prep = np.where(n_prep >= 1, k**2 * p_left * (1 - p_left) / n_prep, np.inf)
    return prep, qmc


def budget_allocator(total_cost: float, disc: DiscretizedDistribution, k: float | None = None,
                     split_grid=None, c1: float | None = None, shots: int = 100,
                     sample_ops: int | None = None) -> Allocation:
    """Best split of ``total_cost`` between prep samples and queries on a grid.

    Minimizes ``c1 / N_q**2 + k**2 p_l (1 - p_l) / N'_s`` subject to
    ``N'_s * sample_ops + N_q = total_cost``, searching the fractions of the
    budget spent on sampling listed in ``split_grid``.
    """
    k = half_gap_k(disc) if k is None else float(k)
    p_left = left_mass(disc)
    if c1 is None:
        c1 = mlae_constant(mean_to_amplitude(exact_state(disc)).a, shots, disc.size - 1)
    ops = sample_ops if sample_ops is not None else ops_per_sample(disc.n, 1e-3)
    minimum = 1 if k == 0 else ops + 1
    if total_cost < minimum:
        raise InfeasibleBudget(f"budget {total_cost} below the minimum {minimum}")
    grid = np.linspace(0.0, 1.0, 1001)[:-1] if split_grid is None else np.asarray(split_grid, dtype=float)
    n_prep = np.floor(grid * total_cost / ops)
    n_queries = np.floor(total_cost - n_prep * ops)
    prep, qmc = predicted_mse(n_prep, n_queries, k, p_left, c1)
    mse = prep + qmc
    best = int(np.argmin(mse))
    if not np.isfinite(mse[best]):
        raise InfeasibleBudget(f"no split of {total_cost} is feasible on the grid")
    return Allocation(int(n_prep[best]), int(n_queries[best]), float(grid[best]),
                      float(mse[best]), float(prep[best]), float(qmc[best]))
