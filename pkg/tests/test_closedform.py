"""Closed-form band matching: construction, classification, and the optimum."""

from __future__ import annotations

import numpy as np
import pytest

from driftq.closedform import (
    SolveResult,
    TurnsDecreasing,
    ValueFunction,
    bellman_residual,
    build_value_function,
    f_eval,
    find_beta_star,
    policy_eval,
    tail_coefficient,
    v_eval,
)
from driftq.errors import DomainError
from driftq.model import build_instance, never_promote_cost, psi

approx = pytest.approx

# regression pins for the baseline example, confirmed independently by the
# numerical integration route in test_bellman_ode
BASELINE_BETA_STAR = 41.40246744000445
BASELINE_THRESHOLDS = (9.967489146668095, 8.644953454524185,
                       5.614729098141857, 1.5686134788583312)


@pytest.fixture(scope="module")
def solved(baseline):
    return find_beta_star(baseline)


def _grid(result: SolveResult, n: int = 2000) -> np.ndarray:
    return np.linspace(0.0, 2.0 * result.thresholds[0], n)


class TestFindBetaStar:
    def test_baseline_value(self, solved):
        assert solved.beta_star == approx(41.4, abs=0.05)
        assert solved.beta_star == approx(BASELINE_BETA_STAR, rel=1e-8)

    def test_bracket_containment(self, solved, baseline):
        assert solved.beta_lower < solved.beta_star <= solved.bracket_upper
        assert solved.bracket_upper == approx(never_promote_cost(baseline), rel=1e-12)

    def test_thresholds(self, solved, baseline):
        zs = solved.thresholds
        assert zs == approx(BASELINE_THRESHOLDS, rel=1e-8)
        assert all(a > b for a, b in zip(zs, zs[1:]))
        assert zs[-1] > 0.0
        vf = solved.value_function
        for k, z in enumerate(zs, start=1):
            assert vf.value(z) == approx(baseline.p - baseline.c[k - 1],
                                         abs=1e-10 * baseline.p)

    def test_residuals_small(self, solved):
        assert abs(solved.tail_residual) <= 1e-9 * 150.0
        assert solved.max_bellman_residual <= 1e-7 * solved.beta_star

    def test_pool_brackets_thresholds_residuals(self, instance_pool):
        for inst in instance_pool:
            res = find_beta_star(inst)
            assert res.beta_lower < res.beta_star <= res.bracket_upper
            zs = res.thresholds
            # the pool keeps p > c_K, so every activity has a positive band
            assert zs[-1] > 0.0
            assert all(a > b for a, b in zip(zs, zs[1:]))
            assert res.max_bellman_residual <= 1e-7 * res.beta_star
            assert res.value_function.value(0.0) == 0.0


class TestBuildClassification:
    def test_upper_bracket_grows(self, baseline):
        out = build_value_function(baseline, never_promote_cost(baseline))
        assert isinstance(out, ValueFunction)
        assert out.tail_coefficient > 0.0

    def test_low_beta_turns_decreasing(self, baseline):
        out = build_value_function(baseline, 18.0)
        assert isinstance(out, TurnsDecreasing)
        assert out.x_turn >= 0.0
        assert 1 <= out.branch <= baseline.n_activities + 1
        assert out.beta == 18.0

    def test_rejects_beta_at_or_below_lower_bound(self, baseline):
        for beta in (17.85, 17.0, -3.0):
            with pytest.raises(DomainError):
                build_value_function(baseline, beta)

    def test_sign_flip_at_optimum(self, baseline, solved):
        b = solved.beta_star
        below = build_value_function(baseline, b - 1e-4 * b)
        above = build_value_function(baseline, b + 1e-4 * b)
        assert isinstance(above, ValueFunction) and above.tail_coefficient > 0.0
        assert isinstance(below, TurnsDecreasing) or below.tail_coefficient < 0.0

    def test_tail_coefficient_monotone_in_beta(self, baseline, solved):
        betas = np.linspace(solved.beta_star * 0.999, never_promote_cost(baseline), 30)
        coefs = []
        for b in betas:
            out = build_value_function(baseline, float(b))
            assert isinstance(out, ValueFunction)
            coefs.append(out.tail_coefficient)
        assert np.all(np.diff(coefs) > 0.0)

    def test_tail_coefficient_matches_build(self, baseline):
        out = build_value_function(baseline, 60.0)
        assert isinstance(out, ValueFunction)
        z1 = out.thresholds[0]
        v1 = baseline.p - baseline.c[0]
        expected = tail_coefficient(baseline, 60.0, v1, z1)
        assert out.tail_coefficient == approx(expected, rel=1e-9)


class TestValueFunctionShape:
    def test_starts_at_zero_and_increases(self, solved):
        vf = solved.value_function
        assert vf.value(0.0) == 0.0
        grid = _grid(solved)
        vals = np.array([vf.value(float(z)) for z in grid])
        derivs = np.array([vf.derivative(float(z)) for z in grid])
        assert np.all(np.diff(vals) > 0.0)
        assert np.all(derivs > 0.0)

    def test_c1_gluing_at_thresholds(self, solved, instance_pool):
        results = [solved] + [find_beta_star(inst) for inst in instance_pool[:6]]
        for res in results:
            vf = res.value_function
            for left, right in zip(vf.pieces, vf.pieces[1:]):
                z = right.x_lo
                dv = abs(left.value(z) - right.value(z))
                dd = abs(left.derivative(z) - right.derivative(z))
                assert dv <= 1e-8 * max(1.0, abs(right.value(z)))
                assert dd <= 1e-8 * max(1.0, abs(right.derivative(z)))

    def test_linear_tail_at_optimum(self, solved, baseline):
        vf = solved.value_function
        tail = vf.pieces[-1]
        assert tail.coef == 0.0
        assert tail.q1 == approx(baseline.h / abs(baseline.theta0), rel=1e-12)

    def test_zero_drift_band_is_quadratic(self, instance_pool):
        # first two pool instances carry an exact zero on the ladder
        for inst in instance_pool[:2]:
            res = find_beta_star(inst)
            quads = [pc for pc in res.value_function.pieces if pc.theta == 0.0]
            assert len(quads) == 1
            assert quads[0].q2 == approx(-inst.h / inst.sigma2, rel=1e-12)
            assert res.max_bellman_residual <= 1e-7 * res.beta_star

    def test_scaling_invariance(self, baseline, solved):
        lam = 2.0
        scaled = build_instance(baseline.theta0, baseline.mu,
                                tuple(lam * ck for ck in baseline.c),
                                baseline.sigma2, lam * baseline.h, lam * baseline.p)
        res = find_beta_star(scaled)
        assert res.beta_star == approx(lam * solved.beta_star, rel=1e-9)
        assert res.thresholds == approx(solved.thresholds, rel=1e-7)
        for z in np.linspace(0.0, 1.5 * solved.thresholds[0], 50):
            assert res.value_function.value(float(z)) == approx(
                lam * solved.value_function.value(float(z)), rel=1e-7)


class TestEvaluators:
    def test_bellman_residual_on_dense_grid(self, solved):
        grid = np.linspace(0.0, 2.0 * solved.thresholds[0], 10_000)
        worst = max(abs(bellman_residual(solved, float(z))) for z in grid)
        assert worst <= 1e-7 * solved.beta_star
        assert worst == approx(solved.max_bellman_residual, rel=1e-6, abs=1e-12)

    def test_relative_value_function(self, solved, baseline):
        assert f_eval(solved, 0.0) == 0.0
        eps = 1e-5
        d0 = (f_eval(solved, eps) - f_eval(solved, 0.0)) / eps
        assert d0 == approx(-baseline.p, rel=1e-4)
        for k, z in enumerate(solved.thresholds, start=1):
            dz = (f_eval(solved, z + eps) - f_eval(solved, z - eps)) / (2 * eps)
            assert dz == approx(-baseline.c[k - 1], rel=1e-4)
        # queue is costly relative to the empty state until v climbs past p
        assert all(f_eval(solved, float(z)) < 0.0
                   for z in np.linspace(0.1, solved.thresholds[0], 25))

    def test_policy_matches_selector(self, solved, baseline):
        grid = _grid(solved, 1000)
        zs = np.asarray(solved.thresholds)
        for z in grid:
            z = float(z)
            if np.any(np.abs(zs - z) < 1e-9):
                continue  # band membership at the thresholds themselves is
                # decided by convention, not by the float value of v
            assert policy_eval(solved, z) == psi(baseline, baseline.p - v_eval(solved, z))

    def test_policy_band_convention(self, solved, baseline):
        th = baseline.theta
        assert policy_eval(solved, 0.0) == th[-1]
        for k, z in enumerate(solved.thresholds, start=1):
            assert policy_eval(solved, z) == th[k - 1]
        assert policy_eval(solved, solved.thresholds[0] + 50.0) == th[0]
        with pytest.raises(DomainError):
            policy_eval(solved, -0.1)

    def test_evaluators_reject_negative_state(self, solved):
        with pytest.raises(DomainError):
            v_eval(solved, -1.0)
        with pytest.raises(DomainError):
            f_eval(solved, -1.0)


class TestShortCircuit:
    def test_promotion_never_pays(self):
        inst = build_instance(-1.0, (1.5,), (5.0,), 2.0, 2.0, 3.0)
        res = find_beta_star(inst)
        assert res.beta_star == approx(never_promote_cost(inst), abs=1e-9)
        assert res.beta_star == approx(5.0, abs=1e-9)
        assert res.thresholds == (0.0,)
        assert res.iterations == 0
        assert res.max_bellman_residual <= 1e-7 * res.beta_star
        # the policy holds the base drift everywhere
        assert policy_eval(res, 0.0) == inst.theta0
        assert policy_eval(res, 3.0) == inst.theta0

    def test_boundary_price_equals_first_marginal_cost(self):
        inst = build_instance(-1.0, (1.5,), (5.0,), 2.0, 2.0, 5.0)
        res = find_beta_star(inst)
        assert res.beta_star == approx(never_promote_cost(inst), abs=1e-9)
        assert res.thresholds == (0.0,)
