"""Log-concave densities, truncation and 2**n-point discretization.

A :class:`ContinuousDistribution` is a truncated, renormalized density on
``[x_l, x_u)`` with ``x_l = 0``.  :func:`discretize` turns it into a
:class:`DiscretizedDistribution` by a left-Riemann sum on a uniform grid of
``N_d = 2**n`` cells.  All means of discretized distributions are in index
units, i.e. over the domain ``{0, ..., 2**n - 1}``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy import integrate, stats

DEFAULT_TAIL_TOL = 1e-9
MAX_QUBITS = 20
BETA_PROBE_POINTS = 100_000
BETA_SAFETY = 1.05

FAMILIES = ("normal", "exponential", "logistic", "uniform")

DEFAULT_PARAMS: dict[str, dict[str, float]] = {
    "normal": {"mean": 0.0, "std": 1.0},
    "exponential": {"rate": 1.0},
    "logistic": {"loc": 0.0, "scale": 1.0},
    "uniform": {"low": 0.0, "high": 1.0},
}


class UnboundedParameterError(ValueError):
    """Family parameters are non-finite or have a non-positive scale."""


class DegenerateHalfError(ValueError):
    """One half of the discretized domain carries no probability mass."""


def _base_distribution(family: str, params: Mapping[str, float]):
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    expected = DEFAULT_PARAMS[family]
    unknown = set(params) - set(expected)
    if unknown:
        raise ValueError(f"unknown parameter(s) for {family}: {sorted(unknown)}")
    p = {**expected, **params}
    for key, value in p.items():
        if not math.isfinite(float(value)):
            raise UnboundedParameterError(f"{family} parameter {key}={value} is not finite")

    if family == "normal":
        if p["std"] <= 0:
            raise UnboundedParameterError("normal std must be > 0")
        return stats.norm(loc=p["mean"], scale=p["std"]), p
    if family == "exponential":
        if p["rate"] <= 0:
            raise UnboundedParameterError("exponential rate must be > 0")
        return stats.expon(scale=1.0 / p["rate"]), p
    if family == "logistic":
        if p["scale"] <= 0:
            raise UnboundedParameterError("logistic scale must be > 0")
        return stats.logistic(loc=p["loc"], scale=p["scale"]), p
    if p["high"] <= p["low"]:
        raise UnboundedParameterError("uniform needs high > low")
    return stats.uniform(loc=p["low"], scale=p["high"] - p["low"]), p


@dataclass(frozen=True)
class ContinuousDistribution:
    """Truncated density shifted onto ``[0, x_u)``.

    ``offset`` maps back to the family's own coordinates: ``x_family = x + offset``.
    ``mass`` is the family probability inside the truncation window, used to
    renormalize ``pdf`` and ``cdf`` to the support.
    """

    family: str
    params: tuple[tuple[str, float], ...]
    x_l: float
    x_u: float
    offset: float
    mass: float
    beta: float
    tail_tol: float
    _base: object = field(repr=False, compare=False)

    @property
    def width(self) -> float:
        return self.x_u - self.x_l

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.x_l + self.x_u)

    def pdf(self, x):
        x = np.asarray(x, dtype=float)
        inside = (x >= self.x_l) & (x < self.x_u)
        return np.where(inside, self._base.pdf(x + self.offset) / self.mass, 0.0)

    def cdf(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.x_l, self.x_u)
        lo = self._base.cdf(self.x_l + self.offset)
        return (self._base.cdf(x + self.offset) - lo) / self.mass

    def interval_mass(self, a: float, b: float) -> float:
        """Probability of ``[a, b)``, using the survival function in the right tail."""
        a = min(max(a, self.x_l), self.x_u)
        b = min(max(b, self.x_l), self.x_u)
        if b <= a:
            return 0.0
        fa, fb = self._base.cdf(a + self.offset), self._base.cdf(b + self.offset)
        if fa > 0.5:
            return float(self._base.sf(a + self.offset) - self._base.sf(b + self.offset)) / self.mass
        return float(fb - fa) / self.mass

    def mean(self) -> float:
        """Mean of the truncated density, by adaptive quadrature."""
        val, _ = integrate.quad(
            lambda x: x * float(self.pdf(x)),
            self.x_l,
            self.x_u,
            points=[self.midpoint],
            epsabs=1e-13,
            epsrel=1e-13,
            limit=500,
        )
        return val

    def is_log_concave(self, probe_points: int = 10_001, atol: float = 1e-9) -> bool:
        x = np.linspace(self.x_l, self.x_u, probe_points, endpoint=False)
        logp = np.log(self.pdf(x))
        return bool(np.all(2 * logp[1:-1] >= logp[:-2] + logp[2:] - atol))


def _estimate_beta(d_pdf, x_l: float, x_u: float) -> float:
    x = np.linspace(x_l, x_u, BETA_PROBE_POINTS, endpoint=False)
    slope = np.diff(d_pdf(x)) / np.diff(x)
    return BETA_SAFETY * float(np.max(np.abs(slope)))


def truncate(family: str, params: Mapping[str, float] | None = None,
             tail_tol: float = DEFAULT_TAIL_TOL) -> ContinuousDistribution:
    """Cut ``tail_tol`` of mass off each unbounded tail and shift so ``x_l = 0``.

    >>> round(truncate("exponential", {"rate": 1.0}).x_u, 3)
    20.723
    """
    if not (0 < tail_tol <= 0.01):
        raise ValueError(f"tail_tol must lie in (0, 0.01], got {tail_tol}")
    base, full = _base_distribution(family, dict(params or {}))

    if family == "uniform":
        lo, hi = full["low"], full["high"]
    elif family == "exponential":
        lo, hi = 0.0, float(base.isf(tail_tol))
    else:
        lo, hi = float(base.ppf(tail_tol)), float(base.isf(tail_tol))

    mass = float(base.cdf(hi) - base.cdf(lo)) if family != "exponential" else float(-np.expm1(-hi * full["rate"]))
    width = hi - lo

    def shifted_pdf(x):
        return base.pdf(x + lo) / mass

    return ContinuousDistribution(
        family=family,
        params=tuple(sorted(full.items())),
        x_l=0.0,
        x_u=width,
        offset=lo,
        mass=mass,
        beta=_estimate_beta(shifted_pdf, 0.0, width),
        tail_tol=tail_tol,
        _base=base,
    )


@dataclass(frozen=True)
class DiscretizedDistribution:
    """A pmf over ``2**n`` equal cells starting at ``x_l`` with width ``step``."""

    probs: np.ndarray
    x_l: float = 0.0
    step: float = 1.0

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        size = p.size
        if size < 2 or size & (size - 1):
            raise ValueError(f"pmf length must be a power of two >= 2, got {size}")
        if np.any(~np.isfinite(p)) or np.any(p < 0):
            raise ValueError("pmf entries must be finite and non-negative")
        total = p.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"pmf sums to {total!r}, not 1")
        p = p / total
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_probs(cls, probs, x_l: float = 0.0, step: float = 1.0) -> "DiscretizedDistribution":
        return cls(np.asarray(probs, dtype=float), x_l, step)

    @property
    def n(self) -> int:
        return self.probs.size.bit_length() - 1

    @property
    def size(self) -> int:
        return self.probs.size

    @property
    def grid(self) -> np.ndarray:
        return self.x_l + np.arange(self.size) * self.step


def discretize(d: ContinuousDistribution, n: int) -> DiscretizedDistribution:
    """Left-Riemann pmf ``p_i ∝ p(x_l + i Δx / 2**n)``, renormalized to sum to 1."""
    if not (1 <= n <= MAX_QUBITS):
        raise ValueError(f"n must lie in [1, {MAX_QUBITS}], got {n}")
    size = 1 << n
    step = d.width / size
    x = d.x_l + np.arange(size) * step
    w = d.pdf(x) * step
    return DiscretizedDistribution(w / w.sum(), d.x_l, step)


def exact_mean(disc: DiscretizedDistribution) -> float:
    return float(np.dot(np.arange(disc.size, dtype=float), disc.probs))


def left_mass(disc: DiscretizedDistribution) -> float:
    return float(disc.probs[: disc.size // 2].sum())


def half_means(disc: DiscretizedDistribution) -> tuple[float, float]:
    """Conditional index means ``(mu_L, mu_R)`` of the two halves."""
    half = disc.size // 2
    idx = np.arange(disc.size, dtype=float)
    left, right = disc.probs[:half], disc.probs[half:]
    pl, pr = left.sum(), right.sum()
    if pl <= 0 or pr <= 0:
        raise DegenerateHalfError(f"left mass {pl} leaves an empty half")
    return float(idx[:half] @ left / pl), float(idx[half:] @ right / pr)


def half_gap_k(disc: DiscretizedDistribution) -> float:
    """``k = mu_R - mu_L``, the sensitivity in ``mu' = mu - k * eps_l``."""
    mu_l, mu_r = half_means(disc)
    return mu_r - mu_l


@dataclass(frozen=True)
class DiscretizationError:
    bound: float
    measured: float
    continuous_mean: float
    discrete_mean: float


def discretization_error_report(d: ContinuousDistribution, n: int) -> DiscretizationError:
    """Compare the ``(beta/2) (Δx/N_d)**2`` bound with the actual mean error.

    The discrete mean is mapped to x-units with each cell's mass placed at
    the cell centre.  Neither number is checked against the other.
    """
    disc = discretize(d, n)
    cell = d.width / disc.size
    mu_d = d.x_l + (exact_mean(disc) + 0.5) * cell
    mu_c = d.mean()
    return DiscretizationError(
        bound=0.5 * d.beta * cell**2,
        measured=abs(mu_c - mu_d),
        continuous_mean=mu_c,
        discrete_mean=mu_d,
    )


def error_bound(beta: float, width: float, n_cells: int) -> float:
    return 0.5 * beta * (width / n_cells) ** 2
