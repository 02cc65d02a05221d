"""Certified constants, bound curves, classification, verification."""

import math

import numpy as np
import pytest
from scipy import integrate

from sovdebt.analysis import (classify_regime, compute_beta, compute_beta_star,
                              compute_constants, find_x_diamond,
                              subsolution_p_minus, subsolution_V2,
                              supersolution_V1, supersolution_V1_curve,
                              verify_solution)
from sovdebt.model import ModelParams, RiskSpec, SalvageSpec
from sovdebt.presets import base_setup, regime1_setup, regime2_setup

BASE = base_setup()


class TestConstants:
    def test_base_values(self):
        params, costs, risk, salvage = BASE
        rep = compute_constants(params, costs, risk, salvage)
        assert rep.theta_min == pytest.approx(1 / 3, abs=1e-15)
        assert rep.K1 == pytest.approx(4.08, abs=1e-12)
        assert rep.x1 == pytest.approx(1 / (6 * 0.34), rel=1e-12)
        assert rep.M1 == pytest.approx(
            8 * (costs.L(0.5) + risk.rho(rep.x1) * params.B), rel=1e-12)
        assert rep.gamma == pytest.approx(0.25 / 0.84, rel=1e-12)
        assert rep.C1 == pytest.approx(0.72, abs=1e-15)

    def test_log_m_star_three_term_max(self):
        params, costs, risk, salvage = BASE
        rep = compute_constants(params, costs, risk, salvage)
        denom = params.sigma ** 2 * rep.x1 ** 2
        t3 = 2 * rep.K1 * params.x_star / denom + math.log(
            4 * params.B / params.x_star + params.r * params.B / rep.K1)
        assert rep.log_M_star == pytest.approx(t3, rel=1e-12)
        assert rep.log_M_star >= math.log(rep.M1)

    def test_zero_bankruptcy_cost(self):
        params = ModelParams(r=0.05, lam=0.2, mu=0.02, sigma=0.3, B=0.0,
                             x_star=1.5, v_max=0.5)
        _, costs, risk, salvage = BASE
        rep = compute_constants(params, costs, risk, salvage)
        assert rep.M1 == pytest.approx(8 * costs.L(0.5), rel=1e-14)
        assert rep.log_M_star == pytest.approx(math.log(rep.M1), rel=1e-14)

    def test_subsolution_parameters(self):
        params, costs, risk, salvage = BASE
        rep = compute_constants(params, costs, risk, salvage)
        # x_bar0 = c'(0)/M* here (astronomically small), stored in log space
        assert rep.log_x_bar0 == pytest.approx(
            math.log(costs.alpha_c) - rep.log_M_star, rel=1e-12)
        assert rep.v_dead_zone == pytest.approx(rep.x_bar0, rel=1e-12)
        assert 0 < rep.gamma <= 1

    def test_report_serializes(self):
        rep = compute_constants(*BASE)
        d = rep.to_dict()
        assert d["theta_min"] == pytest.approx(1 / 3)
        assert isinstance(d["beta_star"], float)


class TestBeta:
    def test_additive_constant_at_zero(self):
        params, _, risk, salvage = BASE
        assert compute_beta(params, risk, salvage, 0.0) == pytest.approx(
            0.795, abs=1e-15)

    def test_known_maximum(self):
        # rho(s) = s/(1.5-s); max of rho(s) ln(1/s) over (0, 1] ~ 0.34699
        params, _, _, salvage = BASE
        risk = RiskSpec(x_star=1.5, kappa=1.0, q=1.0)
        val = compute_beta(params, risk, salvage, 1.0)
        assert val == pytest.approx(1.14199, abs=1e-4)
        # independent oracle: very dense scan
        ss = np.linspace(1e-9, 1.0, 2_000_001)
        oracle = np.max(np.asarray(risk.rho(ss)) * np.log(1.0 / ss)) + 0.795
        assert val == pytest.approx(oracle, abs=1e-7)

    def test_monotone_nondecreasing(self):
        params, _, risk, salvage = BASE
        ts = np.linspace(0.0, 1.45, 25)
        vals = [compute_beta(params, risk, salvage, t) for t in ts]
        assert all(b >= a - 1e-12 for a, b in zip(vals[:-1], vals[1:]))

    def test_slope_bounded_by_rho_over_t(self):
        params, _, risk, salvage = BASE
        delta = 1e-4
        for t in (0.3, 0.6, 0.9, 1.2):
            lo = compute_beta(params, risk, salvage, t)
            hi = compute_beta(params, risk, salvage, t + delta)
            slope = (hi - lo) / delta
            assert slope <= risk.rho(t + delta) / (t + delta) + 1e-6


class TestBetaStar:
    def test_regime1_closed_form(self):
        params, _, risk, salvage = regime1_setup()
        val = compute_beta_star(params, risk, salvage)
        # kappa x*^{1-q}/(1-q) + (lam+r)/theta_min + sigma^2/2
        closed = 0.2 * 1.5 ** 0.5 / 0.5 + 0.3 / 0.75 + 0.005
        assert val == pytest.approx(closed, rel=1e-8)
        assert val == pytest.approx(0.89490, abs=1e-5)
        # quadrature cross-check of the integral component
        integral, _ = integrate.quad(
            lambda t: 0.2 * (1.5 - t) ** -0.5, 0.0, 1.5)
        assert val == pytest.approx(integral + 0.405, rel=1e-7)

    def test_divergent_for_fat_tail(self):
        params, _, _, salvage = BASE
        risk = RiskSpec(x_star=1.5, kappa=1.0, q=2.0)
        assert compute_beta_star(params, risk, salvage) == math.inf

    def test_bounded_custom_integrand(self):
        params, _, _, salvage = BASE
        risk = RiskSpec.custom(
            lambda x: np.minimum(np.asarray(x, dtype=float) * 2.0, 2.9),
            params.x_star)
        val = compute_beta_star(params, risk, salvage)
        assert math.isfinite(val)


class TestSupersolutionV1:
    def test_small_x_limit(self):
        # the ratio decays like 1/ln(1/x): slow, but monotone to 0
        params, _, risk, salvage = BASE
        vals = [supersolution_V1(params, risk, salvage, x)
                for x in (1e-2, 1e-6, 1e-50, 1e-300)]
        assert all(b < a for a, b in zip(vals[:-1], vals[1:]))
        assert vals[-1] < 0.05 * params.B

    def test_bounded_by_B(self):
        params, _, risk, salvage = BASE
        v = supersolution_V1(params, risk, salvage, 1.5 * (1 - 1e-6))
        assert 0 < v <= params.B

    def test_monotone(self):
        params, _, risk, salvage = BASE
        xs = np.linspace(0.05, 1.45, 15)
        vals = supersolution_V1_curve(params, risk, salvage, xs)
        assert np.all(np.diff(vals) >= -1e-9 * params.B)

    def test_scalar_matches_curve(self):
        params, _, risk, salvage = BASE
        for x in (0.3, 0.75, 1.2):
            scalar = supersolution_V1(params, risk, salvage, x)
            curve = float(supersolution_V1_curve(params, risk, salvage,
                                                 np.array([x]))[0])
            assert scalar == pytest.approx(curve, abs=1e-5 * params.B)

    def test_dominates_solution(self, base_solution):
        params, _, risk, salvage = BASE
        sol, _ = base_solution
        x = 0.75
        v1 = supersolution_V1(params, risk, salvage, x)
        assert float(np.interp(x, sol.grid.nodes, sol.V)) <= v1


class TestSubsolutionV2:
    def test_base_fails_threshold_precondition(self):
        params, _, risk, _ = BASE
        xd, reason = find_x_diamond(params, risk)
        assert xd is None and reason == "asp1-threshold"

    def test_slow_blowup_fails_asp1(self):
        params = ModelParams(r=0.05, lam=0.2, mu=0.02, sigma=0.3, B=5.0,
                             x_star=8.0, v_max=0.5)
        risk = RiskSpec(x_star=8.0, kappa=1.0, q=0.5)
        xd, reason = find_x_diamond(params, risk)
        assert xd is None and reason == "asp1-blowup"

    def test_regime2_found_in_upper_half(self):
        params, _, risk, _ = regime2_setup()
        xd, reason = find_x_diamond(params, risk)
        assert reason == "" and 4.0 <= xd < 8.0
        # the tail inequality holds from x_diamond on
        C1 = params.lam + params.mu + params.v_max
        xs = np.linspace(xd, 8.0, 2000, endpoint=False)
        g = np.asarray(risk.rho(xs)) * np.log(8.0 / xs) * (8.0 - xs)
        cond = (2 / (math.log(2) * 8.0)) * (g - (C1 + params.sigma ** 2) * 8.0) \
            - params.r
        assert np.all(cond >= 0)

    def test_endpoints_exact(self):
        params, _, risk, _ = regime2_setup()
        xd, _ = find_x_diamond(params, risk)
        assert subsolution_V2(params, risk, xd, xd) == 0.0
        assert subsolution_V2(params, risk, xd, 8.0) == params.B

    def test_domain_error(self):
        params, _, risk, _ = regime2_setup()
        xd, _ = find_x_diamond(params, risk)
        with pytest.raises(ValueError):
            subsolution_V2(params, risk, xd, xd - 0.1)


class TestPriceSubsolution:
    def test_endpoints_exact(self):
        rep = compute_constants(*BASE)
        assert subsolution_p_minus(rep, 0.0) == 1.0
        assert subsolution_p_minus(rep, rep.x_bar0) == rep.theta_min

    def test_interior_between_bounds(self):
        rep = compute_constants(*BASE)
        x = 0.5 * rep.x_bar0
        val = subsolution_p_minus(rep, x)
        assert rep.theta_min < val < 1.0

    def test_degenerate_full_salvage(self):
        params = ModelParams(r=0.05, lam=0.2, mu=0.02, sigma=0.3, B=5.0,
                             x_star=1.5, v_max=0.0)
        from sovdebt.model import CostSpec
        costs = CostSpec(alpha_L=0.5, alpha_c=0.0, v_max=0.0)
        salvage = SalvageSpec(x_star=1.5, m=0.0)
        rep = compute_constants(params, costs, BASE[2], salvage)
        assert rep.theta_min == 1.0
        assert subsolution_p_minus(rep, rep.x_bar0) == 1.0


class TestClassification:
    def test_regime1_devalue_pay(self):
        regime = classify_regime(*regime1_setup())
        assert regime.label == "DevaluePay"
        assert regime.beta_star == pytest.approx(0.89490, abs=1e-5)
        assert regime.devalue_pay_threshold == pytest.approx(100 * 0.1 / 0.15,
                                                             rel=1e-12)

    def test_regime2_no_action(self):
        regime = classify_regime(*regime2_setup())
        assert regime.label == "NoAction"
        assert regime.threshold_wide_enough and regime.blowup_fast

    def test_base_indeterminate_with_raw_numbers(self):
        regime = classify_regime(*BASE)
        assert regime.label == "Indeterminate"
        assert regime.beta_star == pytest.approx(3.2445, abs=1e-4)
        assert regime.devalue_pay_threshold == pytest.approx(1 / 3, rel=1e-9)
        assert not regime.devalue_pay_holds
        assert not regime.threshold_wide_enough

    def test_scan_density_invariance(self):
        for setup in (base_setup, regime1_setup, regime2_setup):
            args = setup()
            a = classify_regime(*args, n_scan=1000)
            b = classify_regime(*args, n_scan=10_000)
            assert a.label == b.label


class TestVerification:
    def test_base_all_pass(self, base_solution, base_model):
        sol, _ = base_solution
        report = verify_solution(sol, *base_model)
        assert report.passed, [it.name for it in report.failures()]
        skipped = {it.name for it in report.items if it.passed is None}
        assert skipped == {"V_above_V2", "regime_controls"}

    def test_scaled_solution_fails_boundary(self, base_solution, base_model):
        import copy
        sol, _ = base_solution
        bad = copy.deepcopy(sol)
        bad.V = bad.V * 1.1
        report = verify_solution(bad, *base_model)
        failing = {it.name for it in report.failures()}
        assert "boundary_V_at_x_star" in failing
        item = next(it for it in report.items
                    if it.name == "boundary_V_at_x_star")
        assert item.worst == pytest.approx(0.1 * base_model[0].B, rel=1e-9)

    def test_zero_bankruptcy_cost_passes(self):
        from sovdebt.solver import Grid, solve_regularized
        params = ModelParams(r=0.05, lam=0.2, mu=0.02, sigma=0.3, B=0.0,
                             x_star=1.5, v_max=0.5)
        _, costs, risk, salvage = BASE
        sol = solve_regularized(params, costs, risk, salvage, 1e-2,
                                Grid(n=401, x_star=1.5))
        report = verify_solution(sol, params, costs, risk, salvage)
        assert report.passed

    def test_report_serializes(self, base_solution, base_model):
        sol, _ = base_solution
        report = verify_solution(sol, *base_model)
        d = report.to_dict()
        assert d["passed"] is True
        assert all("name" in item for item in d["items"])
