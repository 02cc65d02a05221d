"""Path simulation: exact identities, reproducibility, statistical laws."""

import math

import numpy as np
import pytest
from scipy import stats

from sovdebt.model import CostSpec, ModelParams, RiskSpec, SalvageSpec
from sovdebt.montecarlo import (FeedbackPolicy, Perturbation, SimConfig,
                                bankruptcy_times_ks, default_horizon,
                                deviation_test, estimate_bond_price,
                                estimate_both, estimate_value,
                                sample_normal_stream, simulate_path,
                                simulate_paths)
from sovdebt.presets import base_setup

BASE = base_setup()


def no_devaluation_model(B=5.0, m=0.0):
    params = ModelParams(r=0.05, lam=0.2, mu=0.02, sigma=0.3, B=B,
                         x_star=1.5, v_max=0.0)
    costs = CostSpec(alpha_L=0.5, alpha_c=0.0, v_max=0.0)
    salvage = SalvageSpec(x_star=1.5, m=m)
    return params, costs, BASE[2], salvage


class TestRandomSource:
    def test_normal_stream_law(self):
        zs = sample_normal_stream(20240501, 3, 1_000_000)
        assert abs(zs.mean()) < 4e-3
        assert abs(zs.std() - 1.0) < 4e-3
        ks = stats.kstest(zs, "norm")
        assert ks.pvalue > 1e-3

    def test_streams_differ_per_path_and_seed(self):
        a = sample_normal_stream(1, 0, 100)
        b = sample_normal_stream(1, 1, 100)
        c = sample_normal_stream(2, 0, 100)
        assert not np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_streams_reproducible(self):
        assert np.array_equal(sample_normal_stream(7, 9, 512),
                              sample_normal_stream(7, 9, 512))


class TestImmediateAbsorption:
    def test_at_threshold(self):
        params, costs, risk, salvage = BASE
        fb = FeedbackPolicy.constant(params.x_star, p=1.0)
        sim = SimConfig(dt=1e-3, horizon=1.0, n_paths=4, seed=1)
        out = simulate_path(params.x_star, fb, params, costs, risk, salvage,
                            sim, 0)
        assert out.bankruptcy_time == 0.0
        assert out.cause == "threshold"
        assert out.discounted_cost == params.B
        assert out.bond_payoff == salvage.theta_at_x_star()

    def test_rejects_outside_domain(self):
        params, costs, risk, salvage = BASE
        fb = FeedbackPolicy.constant(params.x_star, p=1.0)
        sim = SimConfig(dt=1e-3, horizon=1.0, n_paths=1, seed=1)
        with pytest.raises(ValueError):
            simulate_paths(2.0, fb, params, costs, risk, salvage, sim)


class TestExactIdentities:
    def test_zero_cost_model(self):
        params = ModelParams(r=0.05, lam=0.2, mu=0.02, sigma=0.3, B=0.0,
                             x_star=1.5, v_max=0.5)
        _, costs, risk, salvage = BASE
        fb = FeedbackPolicy.constant(1.5, p=1.0)
        cols = simulate_paths(0.75, fb, params, costs, risk, salvage,
                              SimConfig(dt=1e-3, horizon=5.0, n_paths=300,
                                        seed=2))
        assert np.max(np.abs(cols["discounted_cost"])) == 0.0

    def test_bond_telescoping_identity(self):
        # theta = 1, v = 0: payoff realizes 1 at bankruptcy and
        # 1 - e^{-(r+lam)T} on truncation, both exactly
        params, costs, risk, salvage = no_devaluation_model(m=0.0)
        fb = FeedbackPolicy.constant(1.5, u=0.1, p=0.9)
        horizon = 30.0
        cols = simulate_paths(0.75, fb, params, costs, risk, salvage,
                              SimConfig(dt=1e-3, horizon=horizon, n_paths=500,
                                        seed=3))
        died = cols["cause"] != 2
        assert died.any() and (~died).any()
        assert np.max(np.abs(cols["bond_payoff"][died] - 1.0)) <= 1e-12
        tail = 1.0 - math.exp(-(params.r + params.lam) * horizon)
        assert np.max(np.abs(cols["bond_payoff"][~died] - tail)) <= 1e-12

    def test_deterministic_accounting(self):
        # no hazard, no noise, constant controls: closed-form cost and bond
        params = ModelParams(r=0.05, lam=0.2, mu=0.05, sigma=1e-9, B=5.0,
                             x_star=1.5, v_max=0.5)
        costs = CostSpec(alpha_L=0.5, alpha_c=0.1, v_max=0.5)
        risk = RiskSpec.custom(
            lambda x: np.zeros_like(np.asarray(x, dtype=float)), 1.5)
        salvage = SalvageSpec(x_star=1.5, m=0.4)
        fb = FeedbackPolicy.constant(1.5, u=0.2, v=0.0, p=1.0)
        T = 10.0
        cols = simulate_paths(0.1, fb, params, costs, risk, salvage,
                              SimConfig(dt=1e-3, horizon=T, n_paths=3, seed=1))
        expect_J = costs.L(0.2) * (1 - math.exp(-params.r * T)) / params.r
        expect_pay = 1 - math.exp(-(params.r + params.lam) * T)
        assert np.max(np.abs(cols["discounted_cost"] - expect_J)) < 1e-13
        assert np.max(np.abs(cols["bond_payoff"] - expect_pay)) < 1e-13


class TestReproducibility:
    def test_repeat_runs_bit_identical(self):
        params, costs, risk, salvage = no_devaluation_model()
        fb = FeedbackPolicy.constant(1.5, u=0.1, p=0.9)
        sim = SimConfig(dt=1e-3, horizon=3.0, n_paths=64, seed=7)
        a = simulate_paths(0.75, fb, params, costs, risk, salvage, sim)
        b = simulate_paths(0.75, fb, params, costs, risk, salvage, sim)
        assert all(np.array_equal(a[k], b[k]) for k in a)

    def test_single_path_equals_batch_member(self):
        params, costs, risk, salvage = no_devaluation_model()
        fb = FeedbackPolicy.constant(1.5, u=0.1, p=0.9)
        sim = SimConfig(dt=1e-3, horizon=3.0, n_paths=64, seed=7)
        batch = simulate_paths(0.75, fb, params, costs, risk, salvage, sim)
        solo = simulate_path(0.75, fb, params, costs, risk, salvage, sim, 17)
        assert solo.discounted_cost == batch["discounted_cost"][17]
        assert solo.bond_payoff == batch["bond_payoff"][17]
        assert solo.bankruptcy_time == batch["bankruptcy_time"][17]

    def test_batch_split_invariance(self):
        params, costs, risk, salvage = no_devaluation_model()
        fb = FeedbackPolicy.constant(1.5, u=0.1, p=0.9)
        sim = SimConfig(dt=1e-3, horizon=3.0, n_paths=64, seed=7)
        whole = simulate_paths(0.75, fb, params, costs, risk, salvage, sim)
        first = simulate_paths(0.75, fb, params, costs, risk, salvage, sim,
                               path_indices=np.arange(20))
        rest = simulate_paths(0.75, fb, params, costs, risk, salvage, sim,
                              path_indices=np.arange(20, 64))
        glued = np.concatenate([first["discounted_cost"],
                                rest["discounted_cost"]])
        assert np.array_equal(whole["discounted_cost"], glued)

    def test_kernel_matches_lockstep_fallback(self):
        # identical streams, same scheme: the compiled and vectorized paths
        # must agree to rounding
        params, costs, risk, salvage = no_devaluation_model()
        fb = FeedbackPolicy.constant(1.5, u=0.1, p=0.9)
        sim = SimConfig(dt=1e-3, horizon=3.0, n_paths=64, seed=7)
        fast = simulate_paths(0.75, fb, params, costs, risk, salvage, sim)
        custom = RiskSpec.custom(
            lambda x: np.asarray(x) * (1.5 - np.asarray(x)) ** -0.5, 1.5)
        slow = simulate_paths(0.75, fb, params, costs, custom, salvage, sim)
        for key in ("bankruptcy_time", "discounted_cost", "bond_payoff"):
            assert np.max(np.abs(fast[key] - slow[key])) < 1e-10, key


class TestHazardLaw:
    def test_constant_hazard_times_are_exponential(self):
        # frozen state: zero drift (r = mu), negligible volatility, rho = 1
        rho0 = 1.0
        params = ModelParams(r=0.05, lam=0.2, mu=0.05, sigma=1e-9, B=1.0,
                             x_star=1.5, v_max=0.0)
        costs = CostSpec(alpha_L=0.5, alpha_c=0.0, v_max=0.0)
        risk = RiskSpec.custom(
            lambda x: np.full_like(np.asarray(x, dtype=float), rho0), 1.5)
        salvage = SalvageSpec(x_star=1.5, m=0.0)
        fb = FeedbackPolicy.constant(1.5, p=1.0)
        sim = SimConfig(dt=1e-3, horizon=30.0, n_paths=20_000, seed=99)
        cols = simulate_paths(0.75, fb, params, costs, risk, salvage, sim)
        assert np.all(cols["cause"] == 0)
        stat, pvalue = bankruptcy_times_ks(cols["bankruptcy_time"], rho0)
        assert pvalue > 0.01

    def test_truncation_bookkeeping(self):
        params, costs, risk, salvage = BASE
        fb = FeedbackPolicy.constant(1.5, p=1.0)
        est = estimate_value(0.75, fb, params, costs, risk, salvage,
                             SimConfig(dt=1e-3, horizon=20.0, n_paths=200,
                                       seed=5))
        c_run = fb.running_cost_bound(costs)
        assert est.truncation_bias_bound == pytest.approx(
            math.exp(-params.r * 20.0) * (c_run / params.r + params.B))
        assert est.horizon == 20.0

    def test_default_horizon_formula(self):
        params, costs, risk, salvage = BASE
        fb = FeedbackPolicy.constant(1.5, u=0.2, p=1.0)
        T = default_horizon(params, fb, costs)
        c_run = costs.L(0.2)
        assert T == pytest.approx(
            math.log((c_run / params.r + params.B) / (1e-3 * params.B))
            / params.r)


class TestEstimates:
    def test_both_shares_one_batch(self):
        params, costs, risk, salvage = no_devaluation_model()
        fb = FeedbackPolicy.constant(1.5, u=0.1, p=0.9)
        sim = SimConfig(dt=1e-3, horizon=5.0, n_paths=500, seed=11)
        both = estimate_both(0.75, fb, params, costs, risk, salvage, sim)
        assert both[0].mean == estimate_value(0.75, fb, params, costs, risk,
                                              salvage, sim).mean
        assert both[1].mean == estimate_bond_price(0.75, fb, params, costs,
                                                   risk, salvage, sim).mean

    def test_immediate_absorption_estimates(self):
        params, costs, risk, salvage = BASE
        fb = FeedbackPolicy.constant(1.5, p=1.0)
        sim = SimConfig(dt=1e-3, horizon=1.0, n_paths=100, seed=1)
        est_J, est_p = estimate_both(1.5, fb, params, costs, risk, salvage,
                                     sim)
        assert est_J.mean == params.B and est_J.standard_error == 0.0
        assert est_p.mean == salvage.theta_at_x_star()
        assert est_p.standard_error == 0.0

    def test_weak_convergence_in_dt(self, base_solution, base_model):
        # halving dt moves the estimate by less than the statistical noise
        params, costs, risk, salvage = base_model
        sol, _ = base_solution
        fb = FeedbackPolicy.from_solution(sol)
        coarse = estimate_value(1.125, fb, params, costs, risk, salvage,
                                SimConfig(dt=2e-3, n_paths=20_000, seed=21))
        fine = estimate_value(1.125, fb, params, costs, risk, salvage,
                              SimConfig(dt=1e-3, n_paths=20_000, seed=21))
        noise = 3 * math.hypot(coarse.standard_error, fine.standard_error)
        assert abs(coarse.mean - fine.mean) <= noise


class TestDeviation:
    def test_zero_perturbation_is_exactly_zero(self):
        params, costs, risk, salvage = no_devaluation_model()
        fb = FeedbackPolicy.constant(1.5, u=0.1, p=0.9)
        sim = SimConfig(dt=1e-3, horizon=3.0, n_paths=200, seed=13)
        delta, se = deviation_test(0.75, fb, Perturbation("u", 0.0, 0.2, 1.0),
                                   params, costs, risk, salvage, sim)
        assert delta == 0.0 and se == 0.0

    def test_perturbation_clamps_to_ranges(self):
        params, costs, risk, salvage = BASE
        fb = FeedbackPolicy.constant(1.5, u=0.99, v=0.49, p=0.9)
        up = Perturbation("u", 0.05, 0.0, 1.5).apply(fb, params.v_max)
        assert np.max(up.u) < 1.0
        vp = Perturbation("v", 0.05, 0.0, 1.5).apply(fb, params.v_max)
        assert np.max(vp.v) < params.v_max

    def test_bump_of_optimal_feedback_not_improving(self, base_solution,
                                                    base_model):
        params, costs, risk, salvage = base_model
        sol, _ = base_solution
        fb = FeedbackPolicy.from_solution(sol)
        sim = SimConfig(dt=1e-3, n_paths=20_000, seed=31)
        delta, se = deviation_test(1.125, fb,
                                   Perturbation("u", 0.05, 0.5, 1.0),
                                   params, costs, risk, salvage, sim)
        assert delta >= -3 * se - 0.01 * params.B
