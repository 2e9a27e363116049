"""Variance models, inverses, hypothesis checks and scaling diagnostics."""

import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hitlab.errors import DomainError
from hitlab.variance import (
    PowerLog,
    Tabulated,
    check_admissible,
    check_gammamult,
    check_hypotheses,
    f_gamma,
    gamma_eval,
    gamma_inverse,
    gammamult_ratio,
    index_estimate,
    local_scaling_limit,
    model_from_dict,
)

# independent oracle: I = int_0^{1/2} y^{-1/2} log(1/y)^{-1/2} dy
I_HALF = float(mp.quad(lambda y: y ** -0.5 / mp.sqrt(mp.log(1 / y)), [0, mp.mpf("1e-8"), 0.25, 0.5]))


class TestGammaEval:
    def test_square_root(self):
        assert gamma_eval(PowerLog(0.5, 0.0), 0.25) == pytest.approx(0.5, rel=1e-15)

    def test_log_factor(self):
        np.testing.assert_allclose(gamma_eval(PowerLog(0.5, 1.0), math.exp(-2)), 2 * math.exp(-1), rtol=1e-14)

    def test_zero(self):
        for m in (PowerLog(0.5, 0.0), PowerLog(0.3, -2.0), PowerLog(0.0, -1.0), PowerLog(1.0, 1.0)):
            assert gamma_eval(m, 0.0) == 0.0

    def test_vectorized(self):
        m = PowerLog(0.7, 0.0)
        r = np.array([0.01, 0.1, 0.2])
        np.testing.assert_allclose(m.gamma(r), r**0.7, rtol=1e-14)

    def test_outside_domain(self):
        m = PowerLog(0.5, 0.0)
        with pytest.raises(DomainError):
            m.gamma(0.5)
        with pytest.raises(DomainError):
            m.gamma(-0.1)

    def test_log_gamma_matches(self):
        m = PowerLog(0.4, 1.5)
        r = np.geomspace(1e-30, m.r_max, 50)
        np.testing.assert_allclose(m.log_gamma(np.log(r)), np.log(m.gamma(r)), rtol=1e-12)

    def test_default_r_max(self):
        assert PowerLog(0.5, 0.0).r_max == pytest.approx(math.exp(-1))
        assert PowerLog(0.5, 2.0).r_max == pytest.approx(math.exp(-4))
        assert PowerLog(0.0, -1.0).r_max == pytest.approx(math.exp(-1))


class TestAdmissibility:
    @pytest.mark.parametrize("H,beta", [(0.5, 0.0), (0.01, -5.0), (1.0, 0.5), (0.0, -0.6), (0.99, 3.0)])
    def test_accepts(self, H, beta):
        check_admissible(H, beta)
        PowerLog(H, beta)

    @pytest.mark.parametrize("H,beta", [(1.0, 0.0), (1.0, -1.0), (0.0, -0.5), (0.0, 0.0), (1.2, 0.0), (-0.1, 0.0)])
    def test_rejects_with_rule(self, H, beta):
        with pytest.raises(DomainError, match="requires H in"):
            PowerLog(H, beta)

    @given(st.floats(0.05, 0.95), st.floats(-3, 3))
    @settings(max_examples=60, deadline=None)
    def test_strictly_increasing(self, H, beta):
        m = PowerLog(H, beta)
        r = m.r_max * np.geomspace(1e-12, 1.0, 200)
        assert np.all(np.diff(np.asarray(m.gamma(r))) > 0)

    def test_round_trip_dict(self):
        m = PowerLog(0.3, -1.0)
        assert model_from_dict(m.to_dict()) == m


class TestInverse:
    def test_power(self):
        assert gamma_inverse(PowerLog(0.5, 0.0), 0.5) == pytest.approx(0.25, rel=1e-12)

    def test_log_case(self):
        m = PowerLog(0.5, 1.0)
        r = gamma_inverse(m, 2 * math.exp(-1))
        assert r == pytest.approx(math.exp(-2), rel=1e-12)
        assert gamma_eval(m, r) == pytest.approx(2 * math.exp(-1), rel=1e-12)

    def test_zero(self):
        assert gamma_inverse(PowerLog(0.3, 2.0), 0.0) == 0.0

    def test_above_range(self):
        m = PowerLog(0.5, 0.0)
        with pytest.raises(DomainError):
            gamma_inverse(m, 2 * m.gamma_max)

    @given(st.floats(0.1, 0.9), st.floats(-2, 2), st.floats(1e-6, 1.0))
    @settings(max_examples=60, deadline=None)
    def test_round_trip(self, H, beta, frac):
        m = PowerLog(H, beta)
        x = m.gamma(frac * m.r_max)
        # gamma flattens at r_max, so the well-posed check is the forward residual
        np.testing.assert_allclose(m.gamma(m.inverse(x)), x, rtol=1e-12)


class TestTabulated:
    def test_interpolates_sqrt(self):
        r = np.linspace(0.001, 0.3, 400)
        m = Tabulated(np.column_stack([r, np.sqrt(r)]))
        np.testing.assert_allclose(m.gamma(np.array([0.01, 0.1, 0.2])), np.sqrt([0.01, 0.1, 0.2]), rtol=2e-3)
        assert m.gamma(0.0) == 0.0

    def test_rejects_non_increasing(self):
        with pytest.raises(DomainError):
            Tabulated(np.array([[0.1, 0.2], [0.2, 0.1]]))

    def test_dict_round_trip(self):
        r = np.linspace(0.01, 0.3, 30)
        m = Tabulated(np.column_stack([r, r**0.4]))
        m2 = model_from_dict(m.to_dict())
        np.testing.assert_allclose(m2.gamma(0.15), m.gamma(0.15))


class TestHypotheses:
    def test_brownian(self):
        rep = check_hypotheses(PowerLog(0.5, 0.0), 0.1, 0.2)
        assert rep.concave_near_zero and rep.derivative_blows_up and rep.h0_satisfied

    def test_linear_fails_blowup(self):
        rep = check_hypotheses(PowerLog(1.0, 0.0, validate=False), 0.1, 0.2)
        assert not rep.derivative_blows_up
        assert not rep.h0_satisfied

    def test_r_log(self):
        rep = check_hypotheses(PowerLog(1.0, 1.0), 0.05, 0.1)
        assert rep.concave_near_zero and rep.derivative_blows_up

    def test_degenerate_window(self):
        with pytest.raises(DomainError):
            check_hypotheses(PowerLog(0.5, 0.0), 0.2, 0.1)

    def test_h1_constant_brownian(self):
        # (sqrt(t) - sqrt(s)) / sqrt(t - s) is maximal at t - s = eps, s = a
        rep = check_hypotheses(PowerLog(0.5, 0.0), 0.1, 0.2, eps_values=[0.1])
        assert rep.h1_constant[0.1] == pytest.approx((math.sqrt(0.2) - math.sqrt(0.1)) / math.sqrt(0.1), rel=1e-9)

    @given(st.floats(0.05, 0.95), st.floats(-2, 2))
    @settings(max_examples=25, deadline=None)
    def test_local_scaling_in_unit_interval(self, H, beta):
        rep = check_hypotheses(PowerLog(H, beta), 0.2 * PowerLog(H, beta).r_max, 0.4 * PowerLog(H, beta).r_max)
        if rep.concave_near_zero:
            assert -1e-9 <= rep.local_scaling_limit <= 1 + 1e-9
        if rep.concave_near_zero and rep.derivative_blows_up:
            assert rep.h0_satisfied


class TestGammaMult:
    def test_brownian_matches_oracle(self):
        res = check_gammamult(PowerLog(0.5, 0.0))
        assert not res.diverges
        np.testing.assert_allclose(res.khat, I_HALF, rtol=1e-8)
        assert res.khat <= 2 * math.sqrt(2)

    def test_closed_form(self):
        # 2 sqrt(2 pi) P(N > sqrt(log 2))
        ref = 2 * math.sqrt(2 * math.pi) * 0.5 * math.erfc(math.sqrt(math.log(2)) / math.sqrt(2))
        np.testing.assert_allclose(I_HALF, ref, rtol=1e-10)

    def test_negative_beta_bounded_by_power_integral(self):
        # for beta < 0, log(1/(xy))^beta <= log(1/x)^beta, so the ratio is at most I
        res = check_gammamult(PowerLog(0.5, -1.0))
        assert not res.diverges
        assert res.khat <= I_HALF * (1 + 1e-9)
        assert res.khat > 0.99 * I_HALF

    def test_single_ratio_against_mpmath(self):
        m = PowerLog(0.5, 1.0)
        x = 1e-3
        g = lambda r: mp.sqrt(r) * mp.log(1 / r)
        ref = mp.quad(lambda y: g(x * y) / (y * mp.sqrt(mp.log(1 / y))), [0, mp.mpf("1e-12"), 1e-4, 0.5]) / g(x)
        np.testing.assert_allclose(gammamult_ratio(m, math.log(x)), float(ref), rtol=1e-7)

    def test_h_zero_diverges(self):
        res = check_gammamult(PowerLog(0.0, -1.0))
        assert res.diverges
        assert res.tail_exponent == pytest.approx(0.5, abs=0.05)


class TestFGamma:
    def test_brownian_closed_form(self):
        m = PowerLog(0.5, 0.0)
        x = np.array([1e-4, 1e-2, 0.2])
        np.testing.assert_allclose(f_gamma(m, x) / np.sqrt(x), math.sqrt(math.log(2)) + I_HALF, rtol=1e-8)

    @given(st.floats(0.05, 0.95), st.floats(-2, 2))
    @settings(max_examples=25, deadline=None)
    def test_nondecreasing(self, H, beta):
        m = PowerLog(H, beta)
        x = m.r_max * np.geomspace(1e-8, 1.0, 12)
        f = np.asarray(f_gamma(m, x))
        assert np.all(np.diff(f) >= -1e-12 * f[1:])

    def test_vanishes_at_zero(self):
        m = PowerLog(0.0, -1.0)
        vals = [float(f_gamma(m, x)) for x in (1e-10, 1e-50, 1e-200)]
        assert vals[0] > vals[1] > vals[2]
        assert vals[2] < 0.2

    def test_divergent_rejected(self):
        m = PowerLog(0.0, -0.5, validate=False)
        with pytest.raises(DomainError):
            f_gamma(m, 0.1)


class TestIndexAndScaling:
    def test_index_ignores_log(self):
        est = index_estimate(PowerLog(0.7, 3.0))
        assert est.value == pytest.approx(0.7, abs=1e-3)

    def test_index_linear(self):
        assert index_estimate(PowerLog(1.0, 0.0, validate=False)).value == pytest.approx(1.0, abs=1e-6)

    def test_index_short_range(self):
        assert index_estimate(PowerLog(0.5, 0.0), k_max=40).value == pytest.approx(0.5, abs=1e-6)

    def test_local_scaling_h(self):
        assert local_scaling_limit(PowerLog(0.5, 2.0)).value == pytest.approx(0.5, abs=1e-3)

    @pytest.mark.parametrize("H", [0.2, 0.5, 0.8])
    def test_power_ratio_exact(self, H):
        m = PowerLog(H, 0.0)
        r = np.geomspace(1e-9, m.r_max, 20)
        np.testing.assert_allclose(m.scaling_ratio(r), H, rtol=1e-12)

    def test_analytic_ratio(self):
        m = PowerLog(0.3, -1.0)
        r = 1e-6
        np.testing.assert_allclose(m.scaling_ratio(r), 0.3 + 1.0 / math.log(1 / r), rtol=1e-10)
        assert local_scaling_limit(m, r_min=1e-6).value == pytest.approx(0.3, abs=1e-3)
