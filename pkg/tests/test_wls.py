"""WLS engine and sandwich covariances."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clusterrct import RankDeficiencyError
from clusterrct.wls import (cr_sandwich, cr_sandwich_grouped,
                            cr_treatment_variance_alt, hw_sandwich, wls_fit)

from conftest import random_sample


def _ols_reference(design, response, weights=None):
    """Independent normal-equations solution for cross-checking."""
    w = np.ones(len(response)) if weights is None else weights
    xtx = design.T @ (design * w[:, None])
    return np.linalg.solve(xtx, design.T @ (w * response))


def _random_problem(seed, n=40, p=3, weighted=False):
    rng = np.random.default_rng(seed)
    design = np.column_stack([np.ones(n), rng.normal(size=(n, p - 1))])
    beta = rng.normal(size=p)
    y = design @ beta + rng.normal(size=n)
    w = rng.uniform(0.5, 2.0, size=n) if weighted else None
    return design, y, w


class TestFit:
    @given(st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_matches_normal_equations(self, seed):
        design, y, _ = _random_problem(seed)
        fit = wls_fit(design, y)
        np.testing.assert_allclose(fit.beta, _ols_reference(design, y),
                                   rtol=1e-9, atol=1e-9)

    @given(st.integers(0, 1000))
    @settings(max_examples=25, deadline=None)
    def test_wls_equals_ols_on_scaled_data(self, seed):
        design, y, w = _random_problem(seed, weighted=True)
        fit_w = wls_fit(design, y, w)
        sw = np.sqrt(w)
        fit_s = wls_fit(design * sw[:, None], y * sw)
        np.testing.assert_allclose(fit_w.beta, fit_s.beta, rtol=1e-9, atol=1e-9)

    def test_xtwx_inv(self):
        design, y, w = _random_problem(7, weighted=True)
        fit = wls_fit(design, y, w)
        np.testing.assert_allclose(
            fit.xtwx_inv, np.linalg.inv(design.T @ (design * w[:, None])),
            rtol=1e-8, atol=1e-10)

    def test_residuals_and_fitted(self):
        design, y, _ = _random_problem(8)
        fit = wls_fit(design, y)
        np.testing.assert_allclose(fit.fitted + fit.residuals, y)

    def test_rank_deficiency_names_columns(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=20)
        design = np.column_stack([np.ones(20), a, 2.0 * a])
        with pytest.raises(RankDeficiencyError) as err:
            wls_fit(design, rng.normal(size=20),
                    column_names=("intercept", "a", "b"))
        assert set(err.value.columns) >= {"a", "b"}

    def test_rejects_nonpositive_weights(self):
        design, y, _ = _random_problem(9)
        with pytest.raises(ValueError):
            wls_fit(design, y, np.zeros(len(y)))


class TestSandwiches:
    def test_hw_matches_direct_formula(self):
        design, y, w = _random_problem(11, weighted=True)
        fit = wls_fit(design, y, w)
        cov = hw_sandwich(fit)
        bread = np.linalg.inv(design.T @ (design * w[:, None]))
        meat = (design * (w * fit.residuals)[:, None]).T @ \
               (design * (w * fit.residuals)[:, None])
        np.testing.assert_allclose(cov, bread @ meat @ bread, rtol=1e-8)

    @given(st.integers(0, 500))
    @settings(max_examples=20, deadline=None)
    def test_cr_equals_hw_for_singleton_clusters(self, seed):
        design, y, _ = _random_problem(seed)
        fit = wls_fit(design, y)
        np.testing.assert_allclose(cr_sandwich(fit, np.arange(len(y))),
                                   hw_sandwich(fit), rtol=1e-9, atol=1e-12)

    def test_cr_grouped_matches_generic(self):
        s = random_sample(4, m=10, p_x=1)
        design = np.column_stack([np.ones(s.n_total), s.z_units.astype(float),
                                 s.x])
        fit = wls_fit(design, s.y)
        np.testing.assert_allclose(
            cr_sandwich_grouped(fit, s.offsets),
            cr_sandwich(fit, s.cluster_index), rtol=1e-10)

    def test_cr_invariant_to_within_cluster_order(self):
        s = random_sample(5, m=8, p_x=1)
        design = np.column_stack([np.ones(s.n_total), s.z_units.astype(float),
                                 s.x])
        fit = wls_fit(design, s.y)
        base = cr_sandwich(fit, s.cluster_index)
        rng = np.random.default_rng(0)
        perm = np.concatenate([off + rng.permutation(n)
                               for off, n in zip(s.offsets, s.n)])
        fit_p = wls_fit(design[perm], s.y[perm])
        np.testing.assert_allclose(cr_sandwich(fit_p, s.cluster_index[perm]),
                                   base, rtol=1e-9, atol=1e-12)

    @given(st.integers(0, 500))
    @settings(max_examples=20, deadline=None)
    def test_alternative_parameterization_agrees(self, seed):
        s = random_sample(seed, m=10, p_x=2)
        xc = s.x - s.x.mean(axis=0)
        z = s.z_units.astype(float)
        design = np.column_stack([np.ones(s.n_total), z, xc, z[:, None] * xc])
        fit = wls_fit(design, s.y)
        cov = cr_sandwich_grouped(fit, s.offsets)
        alt = cr_treatment_variance_alt(s.z_units, s.y, xc, s.offsets)
        assert cov[1, 1] == pytest.approx(alt, abs=1e-10, rel=1e-10)

    def test_multiplier_hook(self):
        design, y, _ = _random_problem(12)
        fit = wls_fit(design, y)
        np.testing.assert_allclose(hw_sandwich(fit, multiplier=2.0),
                                   2.0 * hw_sandwich(fit))
