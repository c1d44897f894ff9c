import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from grqmc.distributions import discretize, half_gap_k, left_mass, truncate
from grqmc.experiments import (
    InfeasibleBudget,
    InsufficientSpanError,
    ScalingReport,
    ScalingRow,
    SlopeFit,
    SweepConfig,
    balanced_c_q,
    budget_allocator,
    cost_ratio_at_equal_rmse,
    decomposition_check,
    fit_loglog_slope,
    mlae_constant,
    pipeline_rmse,
    predicted_mse,
    run_arm,
)
from grqmc.quantum_mc import AllocationInfeasible, MlaeSchedule

UNIFORM4 = discretize(truncate("uniform"), 4)


class TestSlopeFit:
    def test_exact_power_laws(self):
        cost = np.logspace(2, 6, 9)
        fit = fit_loglog_slope(cost, cost**-1.0)
        assert fit.slope == pytest.approx(-1.0, abs=1e-12)
        assert fit.ci95[0] == fit.ci95[1] == fit.slope
        assert fit_loglog_slope(cost, cost**-0.5).slope == pytest.approx(-0.5, abs=1e-12)

    def test_span_checks(self):
        with pytest.raises(InsufficientSpanError):
            fit_loglog_slope([1e2, 1e3, 1e4], [1, 2, 3])
        with pytest.raises(InsufficientSpanError):
            fit_loglog_slope(np.logspace(2, 3.5, 6), np.ones(6))

    def test_bootstrap_ci_covers_slope(self):
        rng = np.random.default_rng(0)
        cost = np.logspace(2, 5, 7)
        sq = [rng.chisquare(1, 400) / c for c in cost]
        fit = fit_loglog_slope(cost, [math.sqrt(s.mean()) for s in sq], sq, seed=4)
        assert fit.ci95[0] < fit.slope < fit.ci95[1]
        assert fit.slope == pytest.approx(-0.5, abs=0.05)

    @given(st.floats(-2.0, 2.0), st.floats(-3.0, 3.0))
    @settings(max_examples=30, deadline=None)
    def test_recovers_any_power(self, slope, log_c):
        cost = np.logspace(1, 4, 5)
        fit = fit_loglog_slope(cost, 10**log_c * cost**slope)
        assert fit.slope == pytest.approx(slope, abs=1e-9)
        assert fit.intercept == pytest.approx(log_c, abs=1e-9)


class TestSweepConfig:
    def test_targets_validation(self):
        with pytest.raises(ValueError):
            SweepConfig(targets=(0.1, 0.2))
        with pytest.raises(ValueError):
            SweepConfig(targets=(0.1, -0.1))

    def test_allocation_rule(self):
        cfg = SweepConfig(c_s=1.0, c_q=1000.0)
        assert cfg.prep_samples(10**-1.5) == 1000
        assert cfg.schedule(1.0).n_queries <= 1000

    def test_digest(self):
        assert SweepConfig().digest() == SweepConfig().digest()
        assert SweepConfig().digest() != SweepConfig(seed=1).digest()
        assert SweepConfig(params={"std": 1.0}).digest() == SweepConfig(params=(("std", 1),)).digest()

    def test_infeasible_point(self):
        cfg = SweepConfig(targets=(2.0,), c_q=1.0)
        with pytest.raises(AllocationInfeasible):
            pipeline_rmse(cfg, 0)

    def test_single_sample_prep(self):
        # N'_s = 1: the prep error k^2 p_l (1 - p_l) dominates the MSE
        cfg = SweepConfig(family="uniform", n=4, targets=(1.0,), c_s=1.0, c_q=1e4, repetitions=400, seed=3)
        row = pipeline_rmse(cfg, 0)
        disc = cfg.distribution()
        prep = half_gap_k(disc) * math.sqrt(left_mass(disc) * (1 - left_mass(disc)))
        assert row.n_prep_samples == 1
        assert row.rmse == pytest.approx(prep, rel=0.05)


class TestArms:
    CFG = SweepConfig(n=6, targets=(1.0, 0.3, 0.1, 0.03, 0.01, 0.003), repetitions=100, c_q=100.0, seed=8)

    def test_deterministic_and_thread_free(self):
        a = run_arm(self.CFG, "pipeline", threads=1)
        b = run_arm(self.CFG, "pipeline", threads=3)
        assert [r.rmse for r in a.rows] == [r.rmse for r in b.rows]
        assert a.fit == b.fit and a.config_hash == b.config_hash

    def test_report_invariants(self):
        for arm in ("exact", "pipeline", "classical"):
            rep = run_arm(self.CFG, arm)
            assert all(r.rmse > 0 for r in rep.rows)
            assert rep.ci95[0] <= rep.slope <= rep.ci95[1]
            if arm == "exact":
                assert all(r.n_prep_samples == 0 for r in rep.rows)
            if arm == "classical":
                assert all(r.n_queries == 0 for r in rep.rows)

    def test_unknown_arm(self):
        with pytest.raises(ValueError):
            pipeline_rmse(self.CFG, 0, arm="hybrid")

    def test_balanced_c_q_equalizes_terms(self):
        disc = discretize(truncate("normal"), 10)
        c_q = balanced_c_q(disc)
        a = 0.5  # symmetric: a is within 1e-3 of 1/2
        k, p = half_gap_k(disc), left_mass(disc)
        assert 3 * 100 * a * (1 - a) * 1023**2 / c_q**2 == pytest.approx(k * k * p * (1 - p), rel=1e-3)


def _report(arm, costs, rmses):
    rows = tuple(ScalingRow(0.1, 0, 0, int(c), float(r), 0.0, np.array([r * r])) for c, r in zip(costs, rmses))
    return ScalingReport(arm, rows, SlopeFit(-0.5, 0.0, (-0.5, -0.5)), "x")


def test_cost_ratio_at_equal_rmse():
    cost = np.logspace(3, 7, 5)
    base = _report("classical", cost, 100 / np.sqrt(cost))
    other = _report("pipeline", 4 * cost, 100 / np.sqrt(cost))
    np.testing.assert_allclose(cost_ratio_at_equal_rmse(other, base), 4.0, rtol=1e-3)


class TestDecomposition:
    SCHED = MlaeSchedule.for_budget(1000, 100)

    def test_zero_eps(self):
        d = decomposition_check(UNIFORM4, 10_000, self.SCHED, 1000, seed=1, zero_eps=True)
        assert d.lhs == d.rhs
        assert d.cross == 0.0 and d.mean_sq_eps == 0.0

    def test_exact_qmc_surrogate(self):
        d = decomposition_check(UNIFORM4, 10_000, self.SCHED, 1000, seed=1, exact_qmc=True)
        assert d.lhs == pytest.approx(d.k**2 * d.mean_sq_eps, rel=1e-9)
        assert d.cross == 0.0

    @pytest.mark.parametrize("family,n", [("uniform", 4), ("normal", 6), ("logistic", 8)])
    def test_identity_holds(self, family, n):
        disc = discretize(truncate(family), n)
        d = decomposition_check(disc, 1000, self.SCHED, 2000, seed=5)
        assert abs(d.lhs - d.rhs) <= 3 * d.combined_se
        assert abs(d.cross) <= 3 * d.cross_se
        assert d.k == pytest.approx(half_gap_k(disc))

    def test_deterministic(self):
        a = decomposition_check(UNIFORM4, 500, self.SCHED, 1000, seed=2)
        b = decomposition_check(UNIFORM4, 500, self.SCHED, 1000, seed=2, threads=4)
        assert a == b


class TestAllocator:
    def test_k_zero_puts_everything_into_queries(self):
        a = budget_allocator(1e5, UNIFORM4, k=0.0)
        assert a.n_prep == 0 and a.n_queries == 100_000 and a.prep_term == 0.0

    def test_infeasible(self):
        with pytest.raises(InfeasibleBudget):
            budget_allocator(3, UNIFORM4)

    @pytest.mark.parametrize("budget", [1e4, 1e5, 1e6, 1e7])
    def test_first_order_condition(self, budget):
        # d/dN'_s [A / N'_s + c1 / N_q^2] = 0 with N_q = C - ops N'_s gives
        # A / N'_s = 2 (c1 / N_q^2) (ops N'_s / N_q)
        ops = 14
        a = budget_allocator(budget, UNIFORM4, sample_ops=ops)
        rhs = 2 * a.qmc_term * ops * a.n_prep / a.n_queries
        assert a.prep_term == pytest.approx(rhs, rel=0.1)

    @given(st.floats(1e3, 1e8), st.sampled_from([("uniform", 4), ("normal", 8), ("exponential", 6)]))
    @settings(max_examples=30, deadline=None)
    def test_never_beaten_beyond_grid_resolution(self, budget, fam):
        disc = discretize(truncate(fam[0]), fam[1])
        ops = 20
        k, p = half_gap_k(disc), left_mass(disc)
        c1 = mlae_constant(0.5, 100, disc.size - 1)

        def mse(frac):
            prep, qmc = predicted_mse(frac * budget / ops, budget * (1 - frac), k, p, c1)
            return float(prep + qmc)

        b = budget_allocator(budget, disc, c1=c1, sample_ops=ops)
        best = minimize_scalar(mse, bounds=(1e-9, 1 - 1e-9), method="bounded", options={"xatol": 1e-12})
        assert b.predicted_mse <= best.fun * 1.01

    @staticmethod
    def _oracle_rmse(budget, disc, ops, c1):
        # continuous minimization of the same MSE model, independent of the grid search
        k, p = half_gap_k(disc), left_mass(disc)
        f = lambda n_s: k * k * p * (1 - p) / n_s + c1 / (budget - ops * n_s) ** 2
        res = minimize_scalar(f, bounds=(1.0, (budget - 1) / ops), method="bounded",
                              options={"xatol": 1e-9})
        return math.sqrt(res.fun)

    def test_predicted_rmse_slope_matches_oracle(self):
        budgets = np.logspace(4, 7, 13)
        ops = 14
        c1 = mlae_constant(0.5, 100, 15)
        rmse = [math.sqrt(budget_allocator(c, UNIFORM4, sample_ops=ops).predicted_mse) for c in budgets]
        oracle = [self._oracle_rmse(c, UNIFORM4, ops, c1) for c in budgets]
        np.testing.assert_allclose(rmse, oracle, rtol=1e-2)
        assert fit_loglog_slope(budgets, rmse).slope == pytest.approx(
            fit_loglog_slope(budgets, oracle).slope, abs=5e-3)

    def test_predicted_rmse_slope_asymptotic(self):
        # the query term adds an O(C^(-4/3)) correction that has died out by here
        budgets = np.logspace(7, 10, 13)
        rmse = [math.sqrt(budget_allocator(c, UNIFORM4).predicted_mse) for c in budgets]
        assert fit_loglog_slope(budgets, rmse).slope == pytest.approx(-0.5, abs=0.02)
