"""Ground-truth machinery: estimands, variance functionals, enumeration, FRT."""

import math

import numpy as np
import pytest

import clusterrct as cr
from clusterrct import EnumerationCapError, EstimatorSpec
from clusterrct.oracle import enumerate_assignments

from conftest import random_sample, random_science


class TestEstimands:
    def test_hand_computed(self):
        # cluster 0: 2 units, effect 1 each; cluster 1: 1 unit, effect -2
        sci = cr.ScienceTable(y1=np.array([2.0, 2.0, 1.0]),
                              y0=np.array([1.0, 1.0, 3.0]),
                              cluster_index=np.array([0, 0, 1]))
        t = cr.true_estimands(sci)
        assert t.tau == pytest.approx((2 * 1 + 1 * (-2)) / 3)
        assert t.tau_bar == pytest.approx((1 - 2) / 2)
        np.testing.assert_allclose(t.tau_clusters, [1.0, -2.0])

    def test_pi_weighted(self):
        sci = cr.ScienceTable(y1=np.array([1.0, 3.0]),
                              y0=np.array([0.0, 0.0]),
                              cluster_index=np.array([0, 1]))
        t = cr.true_estimands(sci, pi=[3.0, 1.0])
        assert t.tau_pi == pytest.approx(0.75 * 1 + 0.25 * 3)


class TestNeymanVariance:
    def test_hand_values(self):
        # e = 1/2, identical arms: V_c = 4 and nothing subtracted
        v, v_c = cr.neyman_variance([1.0, -1.0], [1.0, -1.0], 0.5)
        assert (v, v_c) == (pytest.approx(4.0), pytest.approx(4.0))
        # opposite arms: squared differences remove everything
        v, v_c = cr.neyman_variance([1.0, -1.0], [-1.0, 1.0], 0.5)
        assert (v, v_c) == (pytest.approx(0.0), pytest.approx(4.0))

    def test_requires_centering(self):
        with pytest.raises(ValueError, match="centered"):
            cr.neyman_variance([1.0, 1.0], [0.5, -0.5], 0.5)

    def test_requires_interior_e(self):
        with pytest.raises(ValueError):
            cr.neyman_variance([1.0, -1.0], [1.0, -1.0], 1.0)

    def test_v_never_exceeds_vc(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            e1 = rng.normal(size=9)
            e0 = rng.normal(size=9)
            v, v_c = cr.neyman_variance(e1 - e1.mean(), e0 - e0.mean(), 0.4)
            assert v <= v_c + 1e-12


class TestExactDistribution:
    def test_enumeration_order_and_count(self):
        zs = list(enumerate_assignments(4, 2))
        assert len(zs) == 6
        assert list(zs[0]) == [1, 1, 0, 0]     # lexicographic in treated sets
        assert list(zs[-1]) == [0, 0, 1, 1]

    def test_cluster_total_unbiased(self):
        sci = random_science(0, m=6)
        tau = cr.true_estimands(sci).tau
        dist = cr.exact_distribution(sci, EstimatorSpec("cluster_total"), 0.5)
        assert dist.n_assignments == 20
        assert dist.mean == pytest.approx(tau, abs=1e-12)

    def test_variance_matches_classic_formula(self):
        # exact variance of a cluster-level difference in means is V/(M-1)
        sci = random_science(1, m=6)
        dist = cr.exact_distribution(sci, EstimatorSpec("cluster_total"), 0.5)
        yt1 = np.add.reduceat(sci.y1, sci.offsets) * sci.m / sci.n_total
        yt0 = np.add.reduceat(sci.y0, sci.offsets) * sci.m / sci.n_total
        v, _ = cr.neyman_variance(yt1 - yt1.mean(), yt0 - yt0.mean(), 0.5)
        assert dist.variance == pytest.approx(v / (sci.m - 1), abs=1e-12)

    def test_fractional_treated_count_rejected(self):
        sci = random_science(2, m=5)
        with pytest.raises(ValueError):
            cr.exact_distribution(sci, EstimatorSpec("cluster_total"), 0.5)

    def test_cap(self):
        sci = random_science(3, m=8)
        with pytest.raises(EnumerationCapError):
            cr.exact_distribution(sci, EstimatorSpec("cluster_total"), 0.5,
                                  cap=10)


class TestTheoreticalSE:
    def test_constant_effect_has_equal_v_and_vc(self):
        sci = random_science(4, m=10, p_x=0, effect=2.0)
        sci = cr.ScienceTable(y1=sci.y0 + 2.0, y0=sci.y0,
                              cluster_index=sci.cluster_index)
        # a constant unit-level effect cancels in the centered arm difference
        # for the individual family (cluster totals would still vary with n_i)
        t = cr.theoretical_se(sci, EstimatorSpec("individual"), 0.5)
        assert t.v == pytest.approx(t.v_c, abs=1e-12)

    def test_conservative_dominates(self):
        for seed in range(5):
            sci = random_science(seed, m=12)
            for spec in (EstimatorSpec("individual"),
                         EstimatorSpec("individual", "lin", ("x",)),
                         EstimatorSpec("cluster_total"),
                         EstimatorSpec("cluster_total", "lin",
                                       ("size", "xtilde")),
                         EstimatorSpec("wls_average"),
                         EstimatorSpec("weighted_average_ols")):
                t = cr.theoretical_se(sci, spec, 0.5)
                assert t.conservative_se >= t.se - 1e-12

    def test_matches_enumeration_scale(self):
        # for tau_t the exact variance is V/(M-1); the asymptotic form is V/M
        sci = random_science(5, m=8)
        t = cr.theoretical_se(sci, EstimatorSpec("cluster_total"), 0.5)
        dist = cr.exact_distribution(sci, EstimatorSpec("cluster_total"), 0.5)
        assert t.v / (sci.m - 1) == pytest.approx(dist.variance, abs=1e-12)


class TestFRT:
    def _sharp_null_sample(self, seed, m=4):
        rng = np.random.default_rng(seed)
        n = rng.integers(1, 4, size=m)
        idx = np.repeat(np.arange(m), n)
        y = rng.normal(size=idx.size)
        z = np.zeros(m, dtype=int)
        z[rng.permutation(m)[: m // 2]] = 1
        return cr.ClusteredSample(z=z, y=y, cluster_index=idx)

    def test_exact_p_on_grid(self):
        s = self._sharp_null_sample(0, m=4)
        res = cr.fisher_randomization_test(s, "tau_i", exact=True)
        assert res.exact and res.n_reference == 6
        assert min(abs(res.p_value - k / 6) for k in range(1, 7)) < 1e-12

    def test_exact_includes_observed(self):
        s = self._sharp_null_sample(1, m=6)
        res = cr.fisher_randomization_test(s, "tau_i", exact=True)
        assert res.p_value >= 1.0 / res.n_reference

    def test_monte_carlo_reproducible(self):
        s = self._sharp_null_sample(2, m=8)
        a = cr.fisher_randomization_test(s, "tau_i", draws=200, seed=3)
        b = cr.fisher_randomization_test(s, "tau_i", draws=200, seed=3)
        assert a.p_value == b.p_value
        assert a.n_reference == 200

    def test_monte_carlo_add_one_floor(self):
        s = self._sharp_null_sample(3, m=8)
        res = cr.fisher_randomization_test(s, "tau_i", draws=99, seed=0)
        assert res.p_value >= 1.0 / 100.0

    def test_degenerate_outcomes_give_p_one(self):
        # constant outcomes: every draw has zero SE and statistic 0
        idx = np.array([0, 0, 1, 2, 3])
        s = cr.ClusteredSample(z=np.array([1, 1, 0, 0]),
                               y=np.zeros(5), cluster_index=idx)
        res = cr.fisher_randomization_test(s, "tau_i", exact=True)
        assert res.p_value == 1.0
        assert res.zero_se_count == res.n_reference

    def test_detects_large_effect(self):
        rng = np.random.default_rng(9)
        m = 10
        idx = np.repeat(np.arange(m), 3)
        z = np.zeros(m, dtype=int)
        z[:5] = 1
        y = rng.normal(size=30) + 50.0 * z[idx]
        s = cr.ClusteredSample(z=z, y=y, cluster_index=idx)
        res = cr.fisher_randomization_test(s, "tau_i", exact=True)
        assert res.p_value <= 0.05


class TestRegularity:
    def test_flags(self):
        s = random_sample(0, m=20, max_size=3)
        rep = cr.regularity_diagnostics(s)
        assert "dominant_cluster" not in rep.flags

        n = np.full(20, 2)
        n[0] = 100
        idx = np.repeat(np.arange(20), n)
        z = np.zeros(20, dtype=int)
        z[:10] = 1
        big = cr.ClusteredSample(z=z, y=np.zeros(idx.size), cluster_index=idx)
        rep = cr.regularity_diagnostics(big)
        assert "dominant_cluster" in rep.flags
        assert "heavy_tailed_sizes" in rep.flags
        assert rep.omega_tilde_max == pytest.approx(100 * 20 / idx.size)
