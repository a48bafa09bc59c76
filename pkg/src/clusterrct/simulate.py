"""Simulation scenarios and the Monte Carlo harness.

Five built-in scenario designs (s61..s65). The science table is drawn once
from the scenario's laws and then held fixed; only the treatment assignment
re-randomizes across replications. Replication r uses an independent RNG
substream derived from (seed, r), so results are reproducible and independent
of any execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import ScienceTable
from .errors import ClusterRCTError
from .estimators import estimate_named
from .oracle import true_estimands

SCENARIO_IDS = ("s61", "s62", "s63", "s64", "s65")

DEFAULT_ESTIMATORS = ("tau_i", "tau_i_adj", "tau_i_ancova", "tau_t",
                      "tau_t_adj_n", "tau_t_adj_nx", "tau_a", "tau_a_adj")


@dataclass(frozen=True)
class Scenario:
    id: str
    m: int
    e: float
    seed: int | None
    description: str


def _round_half_away(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def _sizes_uniform(rng, m: int, mean_total: float) -> np.ndarray:
    lo, hi = mean_total / m * 0.6, mean_total / m * 1.4
    return _round_half_away(rng.uniform(lo, hi, size=m)).astype(int)


def _expand(n: np.ndarray):
    idx = np.repeat(np.arange(len(n)), n)
    return idx


def _scenario_heterogeneous(rng, m: int, with_x_terms: bool) -> ScienceTable:
    """Random-size clusters with a cluster trend; outcomes optionally
    nonlinear in the unit covariate."""
    n = _sizes_uniform(rng, m, 3000.0)
    total = int(n.sum())
    idx = _expand(n)
    i_over_m = (idx + 1) / m
    x = i_over_m + rng.uniform(-1.0, 1.0, size=total)
    xc = x - x.mean()
    mu1 = 2.0 * n[idx] * m / total
    mu0 = i_over_m.copy()
    if with_x_terms:
        mu1 = mu1 + xc ** 3
        mu0 = mu0 + xc ** 2
    y1 = rng.normal(mu1, 1.0)
    y0 = rng.normal(mu0, 1.0)
    return ScienceTable(y1=y1, y0=y0, cluster_index=idx, x=x[:, None])


_FOUR_TYPES = (  # (n, x, y1, y0) per cluster type
    (20, -5.0, -1.0, 0.0),
    (20, -5.0, 0.0, 0.0),
    (30, 4.0, -1.0, 0.0),
    (10, 8.0, 5.0, 0.0),
)


def _scenario_four_types(m: int, last_cluster_size: int | None = None) -> ScienceTable:
    """Deterministic population of four repeated cluster types."""
    if m % 4 != 0:
        raise ValueError("four-type scenarios need M divisible by 4")
    n, x, y1, y0 = [], [], [], []
    for i in range(m):
        size, xv, y1v, y0v = _FOUR_TYPES[i % 4]
        if last_cluster_size is not None and i == m - 1:
            size = last_cluster_size
        n.append(size)
        x.extend([xv] * size)
        y1.extend([y1v] * size)
        y0.extend([y0v] * size)
    idx = _expand(np.asarray(n))
    return ScienceTable(y1=np.asarray(y1), y0=np.asarray(y0),
                        cluster_index=idx, x=np.asarray(x)[:, None])


def _scenario_dominant(rng, m: int) -> ScienceTable:
    """Sharp-null population with one dominant cluster."""
    n = _sizes_uniform(rng, m, 2000.0)
    n[m - 1] = 800
    idx = _expand(n)
    i_over_m = (idx + 1) / m
    x = i_over_m.copy()
    xc = x - x.mean()
    y0 = rng.normal(i_over_m ** 2 + xc ** 2, 1.0)
    return ScienceTable(y1=y0.copy(), y0=y0, cluster_index=idx, x=x[:, None])


def make_scenario(scenario_id: str, seed: int | None = None,
                  m: int | None = None):
    """Build the fixed science table for a scenario id.

    Returns (science, scenario). s63 and s64 are fully deterministic; the
    others draw the science once from seed. m overrides the cluster count
    while keeping the scenario's per-cluster laws.
    """
    if scenario_id not in SCENARIO_IDS:
        raise ValueError(f"unknown scenario {scenario_id!r}; choose from "
                         f"{SCENARIO_IDS}")
    rng = np.random.default_rng(seed)
    if scenario_id == "s61":
        mm = m or 160
        science = _scenario_heterogeneous(rng, mm, with_x_terms=True)
        meta = Scenario("s61", mm, 0.3, seed,
                        "random sizes, nonlinear covariate effects")
    elif scenario_id == "s62":
        mm = m or 160
        science = _scenario_heterogeneous(rng, mm, with_x_terms=False)
        meta = Scenario("s62", mm, 0.3, seed, "covariates unrelated to outcomes")
    elif scenario_id == "s63":
        mm = m or 100
        science = _scenario_four_types(mm)
        meta = Scenario("s63", mm, 0.5, seed,
                        "deterministic four-type population")
    elif scenario_id == "s64":
        mm = m or 100
        science = _scenario_four_types(mm, last_cluster_size=50)
        meta = Scenario("s64", mm, 0.5, seed,
                        "four-type population with one large cluster")
    else:
        mm = m or 100
        science = _scenario_dominant(rng, mm)
        meta = Scenario("s65", mm, 0.4, seed,
                        "sharp null with a dominant cluster")
    return science, meta


@dataclass
class MetricsRow:
    estimator: str
    bias: float
    sd: float
    mean_se: float
    rmse: float
    coverage: float
    n_used: int
    n_failed: int

    def as_dict(self) -> dict:
        return {"estimator": self.estimator, "bias": self.bias, "sd": self.sd,
                "mean_se": self.mean_se, "rmse": self.rmse,
                "coverage": self.coverage, "n_used": self.n_used,
                "n_failed": self.n_failed}


def covered(ci_low: float, ci_high: float, truth: float) -> bool:
    """Closed-interval coverage indicator."""
    return ci_low <= truth <= ci_high


def draw_assignment(rng, m: int, n_treated: int) -> np.ndarray:
    z = np.zeros(m, dtype=int)
    z[rng.permutation(m)[:n_treated]] = 1
    return z


def run_monte_carlo(science: ScienceTable, e: float,
                    estimators=DEFAULT_ESTIMATORS, r: int = 1000,
                    seed: int | None = 0, pi=None, level: float = 0.95,
                    truth: float | None = None) -> list[MetricsRow]:
    """Monte Carlo over uniform random assignments of the fixed science.

    Metrics per estimator: bias and coverage against the unit-average effect
    (or an explicit truth), the replication sd, the mean estimated SE, and
    the rmse. Fully reproducible given seed; replication r uses the substream
    (seed, r).
    """
    if r < 1:
        raise ValueError("need at least one replication")
    m = science.m
    k = round(e * m)
    if not 0 < k < m:
        raise ValueError("e*M must leave at least one cluster in each arm")
    if truth is None:
        truth = true_estimands(science, pi=pi).tau

    names = list(estimators)
    ests = {name: [] for name in names}
    ses = {name: [] for name in names}
    covers = {name: [] for name in names}
    failed = {name: 0 for name in names}

    for rep in range(r):
        rng = np.random.default_rng([0 if seed is None else seed, rep])
        z = draw_assignment(rng, m, k)
        sample = science.reveal(z)
        for name in names:
            try:
                rep_out = estimate_named(sample, name, pi=pi, level=level)
            except ClusterRCTError:
                failed[name] += 1
                continue
            ests[name].append(rep_out.estimate)
            ses[name].append(rep_out.se)
            covers[name].append(covered(rep_out.ci_low, rep_out.ci_high, truth))

    rows = []
    for name in names:
        vals = np.asarray(ests[name])
        if vals.size == 0:
            rows.append(MetricsRow(name, math.nan, math.nan, math.nan,
                                   math.nan, math.nan, 0, failed[name]))
            continue
        bias = float(vals.mean() - truth)
        sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        rows.append(MetricsRow(
            estimator=name,
            bias=bias,
            sd=sd,
            mean_se=float(np.mean(ses[name])),
            rmse=float(np.sqrt(np.mean((vals - truth) ** 2))),
            coverage=float(np.mean(covers[name])),
            n_used=int(vals.size),
            n_failed=failed[name],
        ))
    return rows


def parse_scenario_config(path) -> dict:
    """Plain key-value scenario config: id, M, e, R, seed, estimators."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            out[key.strip().lower()] = value.strip()
    return out


__all__ = ["Scenario", "MetricsRow", "make_scenario", "run_monte_carlo",
           "covered", "draw_assignment", "parse_scenario_config",
           "SCENARIO_IDS", "DEFAULT_ESTIMATORS"]
