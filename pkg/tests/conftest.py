"""Shared fixture builders for the test suite."""

import numpy as np
import pytest

from clusterrct import ClusteredSample, ScienceTable


def random_sample(seed, m=12, max_size=5, p_x=1, p_c=0, with_pi=False,
                  n_treated=None):
    """A well-posed random observed sample with both arms populated."""
    rng = np.random.default_rng(seed)
    n = rng.integers(1, max_size + 1, size=m)
    idx = np.repeat(np.arange(m), n)
    total = idx.size
    k = n_treated if n_treated is not None else m // 2
    z = np.zeros(m, dtype=int)
    z[rng.permutation(m)[:k]] = 1
    y = rng.normal(size=total)
    x = rng.normal(size=(total, p_x)) if p_x else None
    c = rng.normal(size=(m, p_c)) if p_c else None
    pi = rng.uniform(0.5, 2.0, size=m) if with_pi else None
    return ClusteredSample(z=z, y=y, cluster_index=idx, x=x, c=c, pi=pi)


def random_science(seed, m=8, max_size=5, p_x=1, effect=1.0, centered=False):
    """A random potential-outcome table; optionally with both arm means zero."""
    rng = np.random.default_rng(seed)
    n = rng.integers(1, max_size + 1, size=m)
    idx = np.repeat(np.arange(m), n)
    total = idx.size
    x = rng.normal(size=(total, p_x)) if p_x else None
    y0 = rng.normal(size=total)
    y1 = y0 + effect + rng.normal(scale=0.5, size=total)
    if p_x:
        y1 = y1 + x[:, 0]
    if centered:
        y1 = y1 - y1.mean()
        y0 = y0 - y0.mean()
    return ScienceTable(y1=y1, y0=y0, cluster_index=idx, x=x)


@pytest.fixture
def small_sample():
    """Deterministic 4-cluster sample with hand-checkable summaries.

    clusters: sizes (2, 1, 2, 1), z = (1, 1, 0, 0)
      cluster 0 (z=1): y = 1, 3
      cluster 1 (z=1): y = 5
      cluster 2 (z=0): y = 0, 2
      cluster 3 (z=0): y = 7
    """
    return ClusteredSample(
        z=np.array([1, 1, 0, 0]),
        y=np.array([1.0, 3.0, 5.0, 0.0, 2.0, 7.0]),
        cluster_index=np.array([0, 0, 1, 2, 2, 3]),
    )
