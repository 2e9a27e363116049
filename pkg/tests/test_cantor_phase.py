"""Cantor constructions, capacity series, premeasures and the phase diagram."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hitlab.errors import DomainError, ResourceError
from hitlab.potential.cantor import (
    CantorSpec,
    cantor_build,
    cantor_capacity_series,
    cantor_points,
    critical_ratio,
    hausdorff_premeasure,
    series_verdict,
    singleton_premeasure,
)
from hitlab.potential.kernels import newtonian_kernel, power_log_gauge, power_log_kernel
from hitlab.potential.phase import (
    commensurability_check,
    polarity_classify,
    symbolic_premeasure_trend,
    symbolic_series_verdict,
    texa_case_select,
)
from hitlab.variance import PowerLog


class TestBuild:
    def test_middle_thirds_level_two(self):
        lvl = cantor_build(CantorSpec.constant("1/3"), 2)
        F = Fraction
        expected = [(F(0), F(1, 9)), (F(2, 9), F(1, 3)), (F(2, 3), F(7, 9)), (F(8, 9), F(1))]
        assert lvl.exact == expected
        assert lvl.intervals == expected
        np.testing.assert_allclose(lvl.left, [float(a) for a, _ in expected])

    def test_sequence_lengths(self):
        spec = CantorSpec("list", {"q": [0.4, 0.3, 0.25, 0.2]})
        lvl = cantor_build(spec, 4)
        assert lvl.length == pytest.approx(0.4 * 0.3 * 0.25 * 0.2)
        assert len(lvl.left) == 16

    def test_dimension(self):
        assert CantorSpec.constant("1/3").dimension() == pytest.approx(math.log(2) / math.log(3))
        assert CantorSpec.constant(0.25).dimension() == pytest.approx(0.5)

    def test_rejects_bad_ratio(self):
        with pytest.raises(DomainError):
            CantorSpec.constant(0.5)
        with pytest.raises(DomainError):
            cantor_build(CantorSpec.constant("1/3"), -1)

    def test_level_cap(self):
        with pytest.raises(ResourceError):
            cantor_build(CantorSpec.constant("1/3"), 40)

    def test_endpoints_are_in_every_level(self):
        spec = CantorSpec.constant("1/3")
        ends = cantor_build(spec, 4).endpoints
        fine = cantor_build(spec, 9)
        idx = np.searchsorted(fine.left, ends, side="right") - 1
        assert np.all(ends <= fine.left[idx] + fine.length + 1e-15)

    @given(st.floats(0.05, 0.45), st.integers(1, 10))
    @settings(max_examples=30, deadline=None)
    def test_nested_and_disjoint(self, q, n):
        spec = CantorSpec.constant(q)
        lvl = cantor_build(spec, n)
        parent = cantor_build(spec, n - 1)
        assert np.all(np.diff(lvl.left) > lvl.length)
        idx = np.searchsorted(parent.left, lvl.left, side="right") - 1
        assert np.all(lvl.left + lvl.length <= parent.left[idx] + parent.length + 1e-14)

    def test_points_and_radii(self):
        pts, rad = cantor_points(CantorSpec.constant("1/3"), 3)
        assert pts.shape == (8, 1)
        np.testing.assert_allclose(rad, 0.5 / 27)

    def test_dict_round_trip(self):
        spec = CantorSpec.corex3(2.0, 2 / 3, 2)
        assert CantorSpec.from_dict(spec.to_dict()).log_diameters(10) == pytest.approx(spec.log_diameters(10))


CRITICAL = [(2 / 3, 2), (0.4, 3)]


class TestSeries:
    @pytest.mark.parametrize("H,d", CRITICAL)
    def test_critical_terms_are_one(self, H, d):
        s = d - 1 / H
        res = cantor_capacity_series(CantorSpec.constant(critical_ratio(H, d)), newtonian_kernel(s), 30)
        np.testing.assert_allclose(res.terms, 1.0, rtol=1e-12)
        assert res.verdict == "Diverges"

    @pytest.mark.parametrize("H,d", CRITICAL)
    def test_log_corrected_converges(self, H, d):
        s, bp = d - 1 / H, 2 * H
        q = critical_ratio(H, d)
        res = cantor_capacity_series(CantorSpec.constant(q), power_log_kernel(s, -bp / H), 30)
        n = np.arange(1, 31)
        ratio = res.terms / (n * math.log(1 / q)) ** (-bp / H)
        # the kernel is frozen on its non-monotone stretch, which covers n = 1, 2
        np.testing.assert_allclose(ratio[2:], 1.0, rtol=1e-10)
        assert res.verdict == "Converges"

    @pytest.mark.parametrize("H,d", CRITICAL)
    def test_corex3_converges(self, H, d):
        res = cantor_capacity_series(CantorSpec.corex3(2.0, H, d), newtonian_kernel(d - 1 / H), 200)
        assert res.verdict == "Converges"
        assert res.tail_exponent == pytest.approx(-2.0, abs=0.2)

    def test_geometric_tail(self):
        _, v = series_verdict(np.arange(1, 21) * math.log(0.9))
        assert v == "Converges"
        _, v = series_verdict(np.arange(1, 21) * math.log(1.1))
        assert v == "Diverges"

    def test_power_tails(self):
        n = np.arange(1, 200)
        assert series_verdict(-2.0 * np.log(n))[1] == "Converges"
        assert series_verdict(-0.5 * np.log(n))[1] == "Diverges"
        assert series_verdict(-1.0 * np.log(n))[1] == "Inconclusive"

    def test_symbolic(self):
        assert symbolic_series_verdict(0.5, 1.0) == "Converges"
        assert symbolic_series_verdict(0.5, 0.25) == "Diverges"

    def test_short_series_rejected(self):
        with pytest.raises(DomainError):
            cantor_capacity_series(CantorSpec.constant("1/3"), newtonian_kernel(0.5), 4)


class TestPremeasure:
    def test_identity(self):
        res = hausdorff_premeasure(CantorSpec.constant("1/3"), power_log_gauge(math.log(2) / math.log(3), 0.0), 20)
        np.testing.assert_allclose(res.sequence, 1.0, atol=1e-12)
        assert res.trend == "Bounded"

    def test_negative_log_to_zero(self):
        H, d, beta = 2 / 3, 2, -0.5
        q = critical_ratio(H, d)
        res = hausdorff_premeasure(CantorSpec.constant(q), power_log_gauge(d - 1 / H, beta / H), 30)
        n = np.arange(1, 31)
        np.testing.assert_allclose(res.sequence, (n * math.log(1 / q)) ** (beta / H), rtol=1e-10)
        assert res.trend == "ToZero"
        assert symbolic_premeasure_trend(H, beta) == "ToZero"

    def test_invalid_gauge(self):
        with pytest.raises(DomainError):
            hausdorff_premeasure(CantorSpec.constant("1/3"), power_log_gauge(0.0, 1.0), 10)

    def test_singleton(self):
        g = power_log_gauge(0.5, 1.0)
        vals = singleton_premeasure(g, np.array([1e-2, 1e-4, 1e-8]))
        assert np.all(np.diff(vals) < 0) and vals[-1] < 1e-2


class TestPolarity:
    @pytest.mark.parametrize("beta,expected", [(0.75, "NonPolar"), (-0.1, "Polar"), (0.25, "GapUnknown"),
                                               (0.5, "BoundaryCase")])
    def test_critical_line(self, beta, expected):
        assert polarity_classify(0.5, beta, 2) == expected

    @given(st.sampled_from([0.25, 0.5, 1 / 3]), st.integers(1, 4), st.sampled_from([-1, -0.1, 0, 0.25, 0.6, 1]))
    @settings(max_examples=60, deadline=None)
    def test_off_critical(self, H, d, beta):
        dH = d * H
        if math.isclose(dH, 1.0):
            return
        assert polarity_classify(H, beta, d) == ("NonPolar" if dH < 1 else "Polar")

    def test_rejects_inadmissible(self):
        with pytest.raises(DomainError):
            polarity_classify(1.0, 0.0, 2)


class TestTexa:
    def test_case_one(self):
        c = texa_case_select(0.5, 1.0, 3)
        assert c.cases == (1,)
        assert c.upper_gauge.params == {"alpha": 1.0, "b": 2.0}
        assert c.upper_established

    def test_cases_two_three(self):
        c = texa_case_select(0.5, -1.0, 2)
        assert c.cases == (2, 3)
        assert c.upper_gauge.params == {"alpha": 0.0, "b": -2.0}
        assert c.lower_phi.params == {"alpha": 0.0, "b": -3.0}

    def test_h_zero(self):
        c = texa_case_select(0.0, -1.0, 2)
        assert c.cases == ("corex1",)
        assert c.lower_phi.name == "one"
        assert not c.upper_established

    def test_gap_case_has_no_upper(self):
        c = texa_case_select(0.5, 0.25, 2)
        assert c.cases == (3,)
        assert not c.upper_established


class TestCommensurability:
    def test_cases(self):
        m = PowerLog(0.5, 0.0)
        assert commensurability_check(m, 3).commensurate
        r2 = commensurability_check(m, 2)
        assert not r2.commensurate and r2.status == "Boundary"
        assert not commensurability_check(m, 1).commensurate
        assert commensurability_check(m, 3).limit == pytest.approx(0.5, abs=1e-6)
