import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from grqmc.distributions import DiscretizedDistribution, discretize, exact_mean, half_gap_k, left_mass, truncate
from grqmc.grover_rudolph import (
    AngleSchedule,
    FirstAngleError,
    PreparedState,
    VanishingMassError,
    angles_exact,
    angles_from_cdf,
    angles_from_probs,
    angles_noisy,
    build_state,
    exact_state,
    mc_first_angle,
    perturb_first_iteration,
    perturb_schedule,
    split_ratio,
)


def _pmf(n, seed):
    rng = np.random.default_rng(seed)
    return DiscretizedDistribution(rng.dirichlet(np.ones(1 << n)))


def exp_unit_interval_pmf(n=8):
    """Left-Riemann pmf of exp(-x) on [0, 2); its left mass is 1/(1 + e^-1)."""
    h = 2.0 / (1 << n)
    w = np.exp(-h * np.arange(1 << n))
    return DiscretizedDistribution(w / w.sum(), 0.0, h)


class TestSplitRatio:
    def test_uniform(self):
        d = truncate("uniform", {"low": 0.0, "high": 3.0})
        assert split_ratio(d, 0.4, 2.9) == pytest.approx(0.5, abs=1e-14)

    def test_exponential(self):
        d = truncate("exponential")
        expected = (1 - math.exp(-1)) / (1 - math.exp(-2))
        assert split_ratio(d, 0.0, 2.0) == pytest.approx(expected, rel=1e-14)
        assert expected == pytest.approx(0.7311, abs=1e-4)

    def test_symmetric_normal(self):
        d = truncate("normal")
        c = d.width / 2
        assert split_ratio(d, c - 1.3, c + 1.3) == pytest.approx(0.5, abs=1e-12)

    def test_vanishing(self):
        d = truncate("exponential")
        with pytest.raises(VanishingMassError):
            split_ratio(d, 25.0, 30.0)

    def test_bad_interval(self):
        with pytest.raises(ValueError):
            split_ratio(truncate("normal"), 1.0, 1.0)


class TestAngles:
    def test_uniform_all_quarter_pi(self):
        sched = angles_exact(truncate("uniform"), 5)
        for thetas in sched.thetas:
            np.testing.assert_allclose(thetas, math.pi / 4, atol=1e-15)

    def test_all_mass_left(self):
        sched = angles_from_probs([1.0, 0.0, 0.0, 0.0])
        assert sched.thetas[0][0] == 0.0

    def test_first_angle_exponential_cdf(self):
        d = truncate("exponential")
        theta0 = angles_from_cdf(d, 1).thetas[0][0]
        oracle = math.acos(math.sqrt(-math.expm1(-d.x_u / 2) / -math.expm1(-d.x_u)))
        assert theta0 == pytest.approx(oracle, rel=1e-9)
        assert theta0 == pytest.approx(5.64e-3, rel=5e-3)

    def test_cdf_angles_converge_to_pmf_angles(self):
        # the left-point pmf is off by O(h) per half, so the gap halves per qubit
        d = truncate("normal")
        theta_cdf = angles_from_cdf(d, 1).thetas[0][0]
        gaps = [abs(angles_exact(d, n).thetas[0][0] - theta_cdf) for n in (8, 9, 10, 11)]
        ratios = np.array(gaps[:-1]) / np.array(gaps[1:])
        np.testing.assert_allclose(ratios, 2.0, rtol=0.05)

    def test_vanishing_intervals_noted(self):
        sched = angles_from_probs([0.5, 0.5, 0.0, 0.0])
        assert sched.thetas[1][1] == pytest.approx(math.pi / 4)
        assert sched.diagnostics

    def test_schedule_validation(self):
        with pytest.raises(ValueError):
            AngleSchedule((np.zeros(1), np.zeros(3)))
        with pytest.raises(ValueError):
            AngleSchedule((np.array([2.0]),))


class TestBuildState:
    def test_single_qubit(self):
        state = build_state(AngleSchedule((np.array([math.pi / 4]),)))
        np.testing.assert_allclose(state.amps, [math.sqrt(0.5)] * 2, atol=1e-15)

    def test_uniform_two_qubits(self):
        sched = AngleSchedule((np.array([math.pi / 4]), np.full(2, math.pi / 4)))
        np.testing.assert_allclose(build_state(sched).amps, [0.5] * 4, atol=1e-15)

    @pytest.mark.parametrize("family", ["normal", "exponential", "logistic", "uniform"])
    @pytest.mark.parametrize("n", [1, 4, 8, 12])
    def test_matches_discretize(self, family, n):
        d = truncate(family)
        state = build_state(angles_exact(d, n))
        np.testing.assert_allclose(state.probs, discretize(d, n).probs, rtol=0, atol=1e-10)

    @given(st.integers(1, 10), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_round_trip_random_pmf(self, n, seed):
        disc = _pmf(n, seed)
        state = build_state(angles_from_probs(disc.probs))
        np.testing.assert_allclose(state.probs, disc.probs, rtol=0, atol=1e-12)
        assert float(state.probs.sum()) == pytest.approx(1.0, abs=1e-12)

    def test_state_validation(self):
        with pytest.raises(ValueError):
            PreparedState(np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            PreparedState(np.array([-1.0, 0.0]))


class TestPerturb:
    def test_zero_error_is_exact(self):
        disc = discretize(truncate("normal"), 6)
        np.testing.assert_allclose(perturb_first_iteration(disc, 0.0).amps, exact_state(disc).amps, atol=1e-15)

    def test_uniform_plug_in(self):
        disc = DiscretizedDistribution(np.full(4, 0.25))
        np.testing.assert_allclose(perturb_first_iteration(disc, 0.1).probs, [0.3, 0.3, 0.2, 0.2], atol=1e-15)

    def test_normal_mean_shift(self):
        disc = discretize(truncate("normal"), 10)
        state = perturb_first_iteration(disc, 0.01)
        assert state.mean() == pytest.approx(exact_mean(disc) - half_gap_k(disc) * 0.01, abs=1e-10)

    def test_clamped(self):
        disc = DiscretizedDistribution(np.full(4, 0.25))
        state = perturb_first_iteration(disc, 0.7)
        assert "clamped" in state.flags
        np.testing.assert_allclose(state.probs, [0.5, 0.5, 0.0, 0.0], atol=1e-15)

    @given(st.integers(1, 10), st.integers(0, 2**32 - 1), st.floats(-0.2, 0.2))
    @settings(max_examples=80, deadline=None)
    def test_mean_identity(self, n, seed, eps):
        disc = _pmf(n, seed)
        pl = left_mass(disc)
        if not 0 <= pl + eps <= 1:
            return
        state = perturb_first_iteration(disc, FirstAngleError(eps))
        assert state.mean() == pytest.approx(exact_mean(disc) - half_gap_k(disc) * eps, abs=1e-10)
        assert float(state.probs[: disc.size // 2].sum()) == pytest.approx(pl + eps, abs=1e-12)

    def test_schedule_route_agrees(self):
        disc = discretize(truncate("logistic"), 7)
        eps = -0.03
        sched = perturb_schedule(angles_from_probs(disc.probs), left_mass(disc) + eps)
        np.testing.assert_allclose(build_state(sched).probs, perturb_first_iteration(disc, eps).probs, atol=1e-12)


class TestMcFirstAngle:
    def test_all_mass_left(self):
        disc = DiscretizedDistribution(np.array([0.5, 0.5, 0.0, 0.0]))
        for seed in range(5):
            assert mc_first_angle(disc, 100, seed).epsilon_l == 0.0

    def test_deterministic(self):
        disc = discretize(truncate("normal"), 8)
        assert mc_first_angle(disc, 1000, 42) == mc_first_angle(disc, 1000, 42)
        assert mc_first_angle(disc, 1000, 42) != mc_first_angle(disc, 1000, 43)

    def test_binomial_variance(self):
        # p_l = 1/(1 + e^-1) exactly, by the geometric series
        disc = exp_unit_interval_pmf()
        assert left_mass(disc) == pytest.approx(1 / (1 + math.exp(-1)), abs=1e-14)
        n_s, trials = 100, 20_000
        eps = np.array([mc_first_angle(disc, n_s, s).epsilon_l for s in range(trials)])
        target = left_mass(disc) * (1 - left_mass(disc)) / n_s
        # relative sd of the MSE estimate is about sqrt(2 / trials) = 1%
        assert (eps**2).mean() == pytest.approx(target, rel=0.05)
        assert abs(eps.mean()) < 4 * math.sqrt(target / trials)

    def test_p_half_plug_in(self):
        assert 0.5 * 0.5 / 100 == pytest.approx(2.5e-3)

    def test_rejects_zero_samples(self):
        with pytest.raises(ValueError):
            mc_first_angle(DiscretizedDistribution(np.full(4, 0.25)), 0, 1)


def test_noisy_angles_shape_and_determinism():
    disc = discretize(truncate("normal"), 6)
    a = angles_noisy(disc, 500, 3)
    b = angles_noisy(disc, 500, 3)
    assert a.n == 6
    for ta, tb in zip(a.thetas, b.thetas):
        np.testing.assert_array_equal(ta, tb)
    state = build_state(a)
    assert float(state.probs.sum()) == pytest.approx(1.0, abs=1e-12)
