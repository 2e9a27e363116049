"""Hit detection, Monte Carlo brackets and closed-form hitting bounds."""

import math

import numpy as np
import pytest
from scipy import stats

from hitlab.errors import BoundNotEstablished, DomainError
from hitlab.hitting import (
    F_sma,
    HitEstimate,
    TargetSet,
    ball_hit_bound,
    calibrate_constant,
    cantor_hit_comparison,
    detect_hits,
    detect_hits_batch,
    estimate_kappa,
    hit_threshold,
    loglog_slope,
    mc_hit_probability,
    mc_hit_refinement,
    point_hit_bound,
    sandwich_experiment,
    wilson,
)
from hitlab.potential.cantor import CantorSpec, critical_ratio
from hitlab.simulation import ProcessSpec
from hitlab.variance import PowerLog

BM = PowerLog(0.5, 0.0)


def arcsine_hit(a, b):
    return 1 - 2 / math.pi * math.asin(math.sqrt(a / b))


def joint_overlap(e1: HitEstimate, e2: HitEstimate) -> bool:
    return e1.ci_upper[0] <= e2.ci_upper[1] and e2.ci_upper[0] <= e1.ci_upper[1]


class TestDetection:
    def test_crossing(self):
        r = detect_hits(np.array([-1.0, 1.0]), TargetSet.point([0.0]), 0.1)
        assert r == {"hit_lower": True, "hit_upper": True}

    def test_far(self):
        r = detect_hits(np.array([1.0, 2.0, 1.5]), TargetSet.point([0.0]), 0.1)
        assert r == {"hit_lower": False, "hit_upper": False}

    def test_near_miss(self):
        r = detect_hits(np.array([0.3, 0.05, 0.4]), TargetSet.point([0.0]), 0.1)
        assert r == {"hit_lower": False, "hit_upper": True}

    def test_ball_2d(self):
        path = np.array([[0.0, 0.09, 0.3], [0.0, 0.0, 0.0]]) + 1.0
        assert detect_hits(path, TargetSet.ball([1.1, 1.0], 0.02), 0.0)["hit_lower"]
        path2 = np.array([[0.0, 0.5], [0.0, 0.0]])
        r = detect_hits(path2, TargetSet.ball([0.25, 0.0], 0.02), 0.3)
        assert r == {"hit_lower": False, "hit_upper": True}

    def test_cantor_1d(self):
        t = TargetSet.cantor_on_axis(CantorSpec.constant("1/3"), 3)
        # [0.4, 0.6] lies in the removed middle third
        assert detect_hits(np.array([0.4, 0.6]), t, 0.01) == {"hit_lower": False, "hit_upper": False}
        assert detect_hits(np.array([0.5, 0.7]), t, 0.0)["hit_lower"]
        assert detect_hits(np.array([0.4, 0.6]), t, 0.1)["hit_upper"]

    def test_cantor_2d_lower_never_certified(self):
        t = TargetSet.cantor_on_axis(CantorSpec.constant("1/3"), 3)
        path = np.array([[0.0, 0.1], [0.0, 0.0]])
        r = detect_hits(path, t, 0.01)
        assert r == {"hit_lower": False, "hit_upper": True}

    def test_batch_lower_implies_upper(self):
        rng = np.random.default_rng(0)
        vals = rng.standard_normal((200, 2, 30)).cumsum(axis=-1) * 0.1
        lo, up = detect_hits_batch(vals, TargetSet.ball([0.3, 0.0], 0.05), 0.02)
        assert np.all(up[lo])

    def test_dimension_mismatch(self):
        with pytest.raises(DomainError):
            detect_hits(np.zeros((2, 3)), TargetSet.point([0.0, 0.0, 0.0]), 0.1)

    def test_threshold_shrinks(self):
        th = [hit_threshold(BM, 0.1 / 2**k) for k in range(4, 16)]
        assert np.all(np.diff(th) < 0)


class TestWilson:
    def test_matches_formula(self):
        k, n = 37, 250
        p, z = k / n, stats.norm.ppf(0.975)
        c = (p + z * z / (2 * n)) / (1 + z * z / n)
        h = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / (1 + z * z / n)
        np.testing.assert_allclose(wilson(k, n), (c - h, c + h), rtol=1e-10)

    def test_extremes(self):
        lo, hi = wilson(0, 100)
        assert lo == 0.0 and 0 < hi < 0.05


class TestMonteCarlo:
    spec = ProcessSpec(BM, 1)

    def test_arcsine_small(self):
        est = mc_hit_probability(self.spec, TargetSet.point([0.0]), 0.1, 0.2, 10, 20000, seed=2)
        lo, hi = est.bracket(3)
        assert lo <= arcsine_hit(0.1, 0.2) <= hi
        assert est.p_lower <= est.p_upper

    def test_refinement_monotone(self):
        res = mc_hit_refinement(self.spec, [TargetSet.point([0.0])], 0.1, 0.2, [8, 9, 10, 11], 5000, seed=3)
        for k in (8, 9, 10):
            a, b = res[(0, k)], res[(0, k + 1)]
            assert b.p_lower >= a.p_lower
            assert b.p_upper <= a.p_upper + 2 * a.se_upper
            assert b.threshold_used < a.threshold_used

    def test_ball_monotone_in_eps(self):
        targets = [TargetSet.ball([0.3], e) for e in (0.01, 0.05, 0.1)]
        res = mc_hit_refinement(self.spec, targets, 0.1, 0.2, [9], 4000, seed=4)
        ups = [res[(i, 9)].p_upper for i in range(3)]
        los = [res[(i, 9)].p_lower for i in range(3)]
        assert ups == sorted(ups) and los == sorted(los)

    def test_remote_target(self):
        z, eps, b = 6 * float(BM.gamma(0.2)), 0.0, 0.2
        est = mc_hit_probability(self.spec, TargetSet.point([z]), 0.1, b, 9, 10000, seed=5)
        # reflection principle: P(sup_[0,b] B > u) = 2 P(B_b > u)
        thr = est.threshold_used
        oracle = 2 * stats.norm.sf((z - eps - thr) / math.sqrt(b))
        assert est.p_upper <= 1e-2
        assert est.p_upper <= oracle + 3 * math.sqrt(oracle / 10000) + 1e-4

    def test_symmetry(self):
        e1 = mc_hit_probability(self.spec, TargetSet.point([0.2]), 0.1, 0.2, 9, 20000, seed=6)
        e2 = mc_hit_probability(self.spec, TargetSet.point([-0.2]), 0.1, 0.2, 9, 20000, seed=66)
        assert joint_overlap(e1, e2)

    def test_thread_independent(self):
        t = TargetSet.ball([0.1, 0.0], 0.05)
        s2 = ProcessSpec(PowerLog(0.4, 0.5), 2)
        a = mc_hit_probability(s2, t, 0.02, 0.04, 8, 2000, seed=7, threads=1)
        b = mc_hit_probability(s2, t, 0.02, 0.04, 8, 2000, seed=7, threads=8)
        assert a == b

    def test_needs_paths(self):
        with pytest.raises(DomainError):
            mc_hit_probability(self.spec, TargetSet.point([0.0]), 0.1, 0.2, 8, 50, seed=1)

    def test_window_in_domain(self):
        with pytest.raises(DomainError):
            mc_hit_probability(self.spec, TargetSet.point([0.0]), 0.1, 0.5, 8, 1000, seed=1)


class TestPointBound:
    def test_vanishes(self):
        vals = [point_hit_bound(BM, 0.1, 0.1 + w) for w in (1e-2, 1e-4, 1e-8)]
        assert vals[0] > vals[1] > vals[2] and vals[2] < 1e-3

    @pytest.mark.parametrize("form", ["f_gamma", "gammamult"])
    def test_sqrt_slope(self, form):
        w = np.array([0.1, 0.05, 0.025, 0.0125])
        vals = [point_hit_bound(BM, 0.2, 0.2 + x, form=form) for x in w]
        assert loglog_slope(w, vals) == pytest.approx(0.5, abs=1e-9)

    def test_log_corrected(self):
        m = PowerLog(0.0, -1.0)
        w, a = 1e-3, 0.1
        val = point_hit_bound(m, a, a + w, form="log_corrected")
        assert val == pytest.approx(float(m.gamma(w)) * math.sqrt(math.log(1 / w)) / float(m.gamma(a)))

    def test_gammamult_refused_when_unbounded(self):
        with pytest.raises(BoundNotEstablished):
            point_hit_bound(PowerLog(0.0, -1.0), 0.1, 0.11, form="gammamult")

    def test_scaling_in_constants(self):
        base = point_hit_bound(BM, 0.1, 0.15)
        assert point_hit_bound(BM, 0.1, 0.15, ell=4.0, c_u=0.5) == pytest.approx(base)


class TestBallBound:
    def test_F_inside(self):
        gb = float(BM.gamma(0.2))
        assert F_sma(BM, 0.2, 0.5 * gb) == 1.0
        assert F_sma(BM, 0.2, gb) == 1.0

    def test_F_continuous_just_above(self):
        gb = float(BM.gamma(0.2))
        assert F_sma(BM, 0.2, gb * (1 + 1e-12)) == pytest.approx(1.0, abs=1e-5)

    @pytest.mark.parametrize("mult", [10, 30, 100])
    def test_F_asymptotic(self, mult):
        gb = float(BM.gamma(0.2))
        z = mult * gb
        assert 1 / F_sma(BM, 0.2, z) == pytest.approx(z**2 / (2 * gb**2), rel=0.05)

    def test_eps_zero(self):
        p = point_hit_bound(BM, 0.1, 0.2)
        assert ball_hit_bound(BM, 0.1, 0.2, 0.3, 0.0, 0.2, d=3) == pytest.approx(p**3)

    def test_increasing_in_eps(self):
        vals = [ball_hit_bound(BM, 0.1, 0.2, 0.3, e, 0.2, d=2) for e in (0.0, 0.01, 0.1)]
        assert vals == sorted(vals)

    def test_kappa_range(self):
        with pytest.raises(DomainError):
            ball_hit_bound(BM, 0.1, 0.2, 0.3, 0.01, 1.0)


class TestKappa:
    @pytest.mark.parametrize("model", [BM, PowerLog(0.3, -1.0), PowerLog(0.7, 1.0)])
    def test_range(self, model):
        a, b = 0.3 * model.r_max, 0.6 * model.r_max
        k = estimate_kappa(ProcessSpec(model, 1), a, b, 20000, seed=8, grid_k=8)
        assert 0 < k.kappa < 0.5

    def test_deterministic(self):
        s = ProcessSpec(BM, 2)
        k1 = estimate_kappa(s, 0.1, 0.2, 3000, seed=9, grid_k=7, threads=1)
        k2 = estimate_kappa(s, 0.1, 0.2, 3000, seed=9, grid_k=7, threads=8)
        assert k1 == k2

    def test_refined_grid(self):
        s = ProcessSpec(BM, 1)
        k1 = estimate_kappa(s, 0.1, 0.2, 20000, seed=10, grid_k=8)
        k2 = estimate_kappa(s, 0.1, 0.2, 20000, seed=11, grid_k=10)
        assert k1.ci[0] <= k2.ci[1] and k2.ci[0] <= k1.ci[1]

    def test_calibrate(self):
        assert calibrate_constant(0.4, 0.2) == pytest.approx(2.0)
        with pytest.raises(DomainError):
            calibrate_constant(0.4, 0.0)


class TestSandwich:
    def test_refused_outside_established_cases(self):
        with pytest.raises(BoundNotEstablished, match="case 3"):
            sandwich_experiment(ProcessSpec(PowerLog(0.5, 0.25), 2), 0.01, 0.02, [0.1, 0.05])

    def test_ordering(self):
        rep = sandwich_experiment(ProcessSpec(BM, 3), 0.1, 0.2, [2.0**-e for e in range(3, 7)],
                                  z=[0.1, 0.0, 0.0], grid_k=8, n_paths=5000, seed=12, threads=4)
        assert rep.ordering_holds
        assert rep.slope_phi == pytest.approx(1.0)
        assert all(r["p_lower"] <= r["p_upper"] for r in rep.rows)
        ups = [r["p_upper"] for r in rep.rows]
        assert ups == sorted(ups, reverse=True)

    @pytest.mark.slow
    @pytest.mark.xfail(strict=True, reason="the modulus threshold exceeds every eps at feasible grids, "
                                           "so the upper bracket flattens; see the decisions ledger")
    def test_slope_matches_gauge(self):
        rep = sandwich_experiment(ProcessSpec(BM, 3), 0.1, 0.2, [2.0**-e for e in range(3, 9)],
                                  z=[0.1, 0.0, 0.0], grid_k=9, n_paths=100000, seed=13, threads=8)
        assert abs(rep.slope_p_upper - 1.0) <= 0.3


class TestCantorComparison:
    def test_log_boosted_hits_more(self):
        H = 2 / 3
        spec = CantorSpec.constant(critical_ratio(H, 2))
        rows = cantor_hit_comparison([PowerLog(H, 2 * H), PowerLog(H, -0.5)], 2, spec, 8, 0.05, 0.1,
                                     grid_k=9, n_paths=5000, seed=14, threads=4)
        assert rows[0]["p_upper"] > rows[1]["ci_upper_hi"]
        assert all(r["p_lower"] == 0.0 for r in rows)
