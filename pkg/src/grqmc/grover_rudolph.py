"""Amplitude-level Grover-Rudolph state preparation.

The state is grown one qubit at a time.  At iteration ``m`` every basis
state ``|i>`` (``i < 2**m``) is split into ``|2i>`` and ``|2i+1>`` with
amplitudes ``cos(theta[m][i])`` and ``sin(theta[m][i])``, where
``cos^2(theta)`` is the fraction of the interval's mass in its left half.
The new qubit is the least significant bit, so the first rotation decides
the split between indices ``< 2**(n-1)`` and the rest.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .classical_mc import Sampler
from .distributions import (
    MAX_QUBITS,
    ContinuousDistribution,
    DegenerateHalfError,
    DiscretizedDistribution,
    discretize,
    left_mass,
)
from .rng import make_rng

log = logging.getLogger(__name__)

VANISHING_MASS = 1e-300
HALF_ANGLE = math.acos(math.sqrt(0.5))


class VanishingMassError(ArithmeticError):
    """Interval mass underflowed; callers fall back to an even split."""


@dataclass(frozen=True)
class AngleSchedule:
    """``thetas[m]`` holds the ``2**m`` rotation angles of iteration ``m``."""

    thetas: tuple[np.ndarray, ...]
    diagnostics: tuple[str, ...] = ()

    def __post_init__(self):
        frozen = []
        for m, t in enumerate(self.thetas):
            t = np.array(t, dtype=float)
            if t.shape != (1 << m,):
                raise ValueError(f"iteration {m} needs {1 << m} angles, got shape {t.shape}")
            if np.any(t < 0) or np.any(t > math.pi / 2):
                raise ValueError(f"iteration {m} has angles outside [0, pi/2]")
            t.setflags(write=False)
            frozen.append(t)
        object.__setattr__(self, "thetas", tuple(frozen))

    @property
    def n(self) -> int:
        return len(self.thetas)


@dataclass(frozen=True)
class PreparedState:
    amps: np.ndarray
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        a = np.array(self.amps, dtype=float)
        if np.any(a < 0):
            raise ValueError("amplitudes must be non-negative")
        norm = float(np.dot(a, a))
        if abs(norm - 1.0) > 1e-12:
            raise ValueError(f"state norm^2 is {norm!r}, not 1")
        a.setflags(write=False)
        object.__setattr__(self, "amps", a)

    @property
    def n(self) -> int:
        return self.amps.size.bit_length() - 1

    @property
    def probs(self) -> np.ndarray:
        return self.amps**2

    def mean(self) -> float:
        """Index-domain mean of the encoded pmf."""
        return float(np.dot(np.arange(self.amps.size, dtype=float), self.probs))


@dataclass(frozen=True)
class FirstAngleError:
    epsilon_l: float
    n_samples: int = 0
    seed: int = 0


def split_ratio(d: ContinuousDistribution, x_left: float, x_right: float) -> float:
    """Fraction of the mass of ``[x_left, x_right)`` lying left of its midpoint."""
    if not x_left < x_right:
        raise ValueError("need x_left < x_right")
    total = d.interval_mass(x_left, x_right)
    if total < VANISHING_MASS:
        raise VanishingMassError(f"interval [{x_left}, {x_right}) has mass {total}")
    f = d.interval_mass(x_left, 0.5 * (x_left + x_right)) / total
    return min(max(f, 0.0), 1.0)


def _thetas_from_ratios(ratios: np.ndarray) -> np.ndarray:
    return np.arccos(np.sqrt(np.clip(ratios, 0.0, 1.0)))


def _dyadic_masses(probs: np.ndarray) -> list[np.ndarray]:
    """Block masses of every dyadic level, coarsest (one block) first."""
    levels = [np.asarray(probs, dtype=float)]
    while levels[-1].size > 1:
        fine = levels[-1]
        levels.append(fine[0::2] + fine[1::2])
    return levels[::-1]


def angles_from_probs(probs) -> AngleSchedule:
    """Schedule whose state reproduces ``probs`` exactly."""
    levels = _dyadic_masses(probs)
    thetas, notes = [], []
    for m in range(len(levels) - 1):
        parent, children = levels[m], levels[m + 1]
        vanishing = parent < VANISHING_MASS
        with np.errstate(divide="ignore", invalid="ignore"):
            f = np.where(vanishing, 0.5, children[0::2] / np.where(vanishing, 1.0, parent))
        if vanishing.any():
            notes.append(f"iteration {m}: {int(vanishing.sum())} vanishing interval(s) set to pi/4")
        thetas.append(_thetas_from_ratios(f))
    for note in notes:
        log.debug(note)
    return AngleSchedule(tuple(thetas), tuple(notes))


def angles_exact(d: ContinuousDistribution, n: int) -> AngleSchedule:
    """Exact angles for the ``2**n``-point left-Riemann discretization of ``d``.

    The interval masses are those of the discretized density, so the
    prepared state encodes ``discretize(d, n)`` to machine precision.  Use
    :func:`angles_from_cdf` for masses of the continuous density instead.
    """
    return angles_from_probs(discretize(d, n).probs)


def angles_from_cdf(d: ContinuousDistribution, n: int) -> AngleSchedule:
    """Angles from analytic interval masses, one :func:`split_ratio` per interval."""
    if not (1 <= n <= MAX_QUBITS):
        raise ValueError(f"n must lie in [1, {MAX_QUBITS}], got {n}")
    thetas, notes = [], []
    for m in range(n):
        edges = np.linspace(d.x_l, d.x_u, (1 << m) + 1)
        f = np.empty(1 << m)
        for i in range(1 << m):
            try:
                f[i] = split_ratio(d, edges[i], edges[i + 1])
            except VanishingMassError:
                f[i] = 0.5
                notes.append(f"iteration {m} interval {i}: vanishing mass, set to pi/4")
        thetas.append(_thetas_from_ratios(f))
    return AngleSchedule(tuple(thetas), tuple(notes))


def build_state(schedule: AngleSchedule) -> PreparedState:
    amps = np.ones(1)
    for theta in schedule.thetas:
        grown = np.empty(2 * amps.size)
        grown[0::2] = amps * np.cos(theta)
        grown[1::2] = amps * np.sin(theta)
        amps = grown
    # renormalize away accumulated rounding (|1 - norm| ~ n * 1e-16)
    return PreparedState(amps / math.sqrt(float(np.dot(amps, amps))))


def exact_state(disc: DiscretizedDistribution) -> PreparedState:
    return PreparedState(np.sqrt(disc.probs))


def perturb_first_iteration(disc: DiscretizedDistribution, err: FirstAngleError | float) -> PreparedState:
    """Encode ``disc`` with its left-half mass shifted from ``p_l`` to ``p_l + eps_l``.

    Left-half amplitudes are ``sqrt(p_i (p_l + eps) / p_l)``, right-half ones
    ``sqrt(p_i (1 - p_l - eps) / (1 - p_l))``.  If ``p_l + eps`` leaves
    ``[0, 1]`` it is clamped and the state carries a ``"clamped"`` flag.
    """
    eps = err.epsilon_l if isinstance(err, FirstAngleError) else float(err)
    pl = left_mass(disc)
    if not 0.0 < pl < 1.0:
        raise DegenerateHalfError(f"left mass {pl} leaves an empty half")
    target = pl + eps
    flags = ()
    if not 0.0 <= target <= 1.0:
        log.warning("p_l + eps_l = %r clamped into [0, 1]", target)
        target = min(max(target, 0.0), 1.0)
        flags = ("clamped",)
    half = disc.size // 2
    scale = np.empty(disc.size)
    scale[:half] = target / pl
    scale[half:] = (1.0 - target) / (1.0 - pl)
    probs = disc.probs * scale
    amps = np.sqrt(probs / probs.sum())
    return PreparedState(amps, flags)


def perturb_schedule(schedule: AngleSchedule, p_left: float) -> AngleSchedule:
    """Replace the first rotation so that it puts ``p_left`` on the left half."""
    first = _thetas_from_ratios(np.array([p_left]))
    return AngleSchedule((first,) + schedule.thetas[1:], schedule.diagnostics)


def mc_first_angle(disc: DiscretizedDistribution, n_samples: int, seed: int,
                   sampler: Sampler | None = None) -> FirstAngleError:
    """Estimate ``p_l`` by counting how many of ``n_samples`` draws land left.

    Returns the signed error ``eps_l = count / n_samples - p_l``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    sampler = sampler or Sampler(disc)
    hits = sampler.count_below(make_rng(seed), n_samples, disc.size // 2)
    return FirstAngleError(hits / n_samples - left_mass(disc), n_samples, seed)


def angles_noisy(disc: DiscretizedDistribution, n_samples: int, seed: int) -> AngleSchedule:
    """Every split ratio replaced by an independent ``n_samples``-draw binomial estimate.

    Exploration mode only: the first-iteration error model is what the
    experiments use.
    """
    rng = make_rng(seed)
    levels = _dyadic_masses(disc.probs)
    thetas, notes = [], []
    for m in range(len(levels) - 1):
        parent, children = levels[m], levels[m + 1]
        vanishing = parent < VANISHING_MASS
        f = np.where(vanishing, 0.5, children[0::2] / np.where(vanishing, 1.0, parent))
        f_hat = rng.binomial(n_samples, np.clip(f, 0.0, 1.0)) / n_samples
        f_hat = np.where(vanishing, 0.5, f_hat)
        if vanishing.any():
            notes.append(f"iteration {m}: {int(vanishing.sum())} vanishing interval(s) set to pi/4")
        thetas.append(_thetas_from_ratios(f_hat))
    return AngleSchedule(tuple(thetas), tuple(notes))
