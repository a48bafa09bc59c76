"""The regression estimators of the cluster-randomized analysis.

Four families, with and without covariate adjustment:

  individual            difference in means / Lin / ancova on unit rows,
                        cluster-robust (LZ) standard error
  cluster_total         OLS on scaled cluster totals, HW standard error
  wls_average           WLS on cluster averages with weights pi, HW
  weighted_average_ols  OLS on the weighted outcomes M*pi*Ybar_i, HW

The SE flavor is bound to the family: LZ for unit-level fits, HW for all
cluster-level fits.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm

from . import data as d
from .design import Design, EstimatorSpec, build_design
from .errors import InsufficientDataError
from .wls import FitResult, cr_sandwich_grouped, hw_sandwich, wls_fit


@dataclass
class EstimatorReport:
    estimate: float
    se: float
    se_flavor: str            # "LZ" | "HW"
    ci_low: float
    ci_high: float
    level: float
    spec: EstimatorSpec
    name: str = ""
    recommended: bool | None = None
    diagnostics: dict = field(default_factory=dict)
    fit: FitResult | None = field(default=None, repr=False)


def _require_two_arms(sample: d.ClusteredSample) -> None:
    treated = int(sample.z.sum())
    if treated == 0 or treated == sample.m:
        raise InsufficientDataError(
            "estimation needs at least one treated and one control cluster")


def wald_interval(estimate: float, se: float, level: float):
    if not 0.0 <= level < 1.0:
        raise ValueError("confidence level must be in [0, 1)")
    zq = norm.ppf(0.5 + level / 2.0) if level > 0 else 0.0
    return estimate - zq * se, estimate + zq * se


def _fit_design(dsn: Design) -> FitResult:
    return wls_fit(dsn.matrix, dsn.response, dsn.weights,
                   treatment_index=dsn.treatment_index,
                   column_names=dsn.column_names)


def _run(sample: d.ClusteredSample, spec: EstimatorSpec,
         pi: np.ndarray | None, level: float,
         point_only: bool = False) -> EstimatorReport:
    _require_two_arms(sample)
    dsn = build_design(sample, spec, pi=pi)
    fit = _fit_design(dsn)
    t = dsn.treatment_index
    est = float(fit.beta[t])
    if point_only:
        return EstimatorReport(estimate=est, se=float("nan"), se_flavor="",
                               ci_low=float("nan"), ci_high=float("nan"),
                               level=level, spec=spec, fit=fit)
    if spec.family == "individual":
        cov = cr_sandwich_grouped(fit, dsn.row_offsets)
        flavor = "LZ"
    else:
        cov = hw_sandwich(fit)
        flavor = "HW"
    se = float(np.sqrt(max(cov[t, t], 0.0)))
    lo, hi = wald_interval(est, se, level)
    diag = {"M": sample.m, "n_treated_units": sample.n_treated_units,
            "n_control_units": sample.n_control_units,
            "omega_max": sample.omega_max}
    if dsn.dropped:
        diag["dropped_columns"] = list(dsn.dropped)
    return EstimatorReport(estimate=est, se=se, se_flavor=flavor,
                           ci_low=lo, ci_high=hi, level=level, spec=spec,
                           diagnostics=diag, fit=fit)


def individual_regression(sample: d.ClusteredSample, adjustment: str = "none",
                          level: float = 0.95) -> EstimatorReport:
    """Unit-level regression with cluster-robust SE.

    adjustment "none" is the difference in means; "lin" adjusts for centered
    unit covariates with treatment interactions; "ancova" omits interactions.
    """
    cov = ("x",) if adjustment != "none" else ()
    spec = EstimatorSpec("individual", adjustment, cov)
    return _run(sample, spec, None, level)


def cluster_total_regression(sample: d.ClusteredSample, adjustment: str = "none",
                             cluster_covariates: tuple = ("size", "xtilde"),
                             level: float = 0.95) -> EstimatorReport:
    """Regression of scaled cluster totals with HW SE.

    The default adjusted covariates are the relative cluster size and the
    scaled covariate totals (the recommended choice for the unit-average
    effect). ancova is supported but flagged not recommended.
    """
    cov = tuple(cluster_covariates) if adjustment != "none" else ()
    spec = EstimatorSpec("cluster_total", adjustment, cov)
    report = _run(sample, spec, None, level)
    if adjustment == "ancova":
        report.recommended = False
        report.diagnostics["note"] = "ancova on cluster totals is not recommended"
    return report


def wls_average_regression(sample: d.ClusteredSample, pi=None,
                           adjustment: str = "none",
                           cluster_covariates: tuple = ("xbar",),
                           level: float = 0.95) -> EstimatorReport:
    """WLS of cluster averages with weights pi; targets the pi-weighted
    average effect over clusters."""
    piv = d.resolve_weights(sample, pi)
    cov = tuple(cluster_covariates) if adjustment != "none" else ()
    spec = EstimatorSpec("wls_average", adjustment, cov, weights="pi")
    return _run(sample, spec, piv, level)


def weighted_average_ols_regression(sample: d.ClusteredSample, pi=None,
                                    adjustment: str = "none",
                                    cluster_covariates: tuple | None = None,
                                    level: float = 0.95) -> EstimatorReport:
    """OLS of the weighted outcomes M*pi_i*Ybar_i; targets the pi-weighted
    average effect.

    The default adjusted covariates are (pi, pi*xbar), the recommended choice.
    """
    piv = d.resolve_weights(sample, pi)
    if cluster_covariates is None:
        cluster_covariates = ("pi", "pi*xbar") if sample.x is not None else ("pi",)
    cov = tuple(cluster_covariates) if adjustment != "none" else ()
    spec = EstimatorSpec("weighted_average_ols", adjustment, cov, weights="pi")
    return _run(sample, spec, piv, level)


def estimate(sample: d.ClusteredSample, spec: EstimatorSpec, pi=None,
             level: float = 0.95, point_only: bool = False) -> EstimatorReport:
    """Dispatch a spec to its family and assemble the Wald interval."""
    piv = d.resolve_weights(sample, pi) if spec.weights == "pi" else None
    return _run(sample, spec, piv, level, point_only=point_only)


# -- named registry ------------------------------------------------------
# name -> (spec builder, human label). pi-family entries take the weight
# vector chosen by the caller; tau_a fixes uniform weights.

def _spec(family, adjustment="none", covariates=()):
    return EstimatorSpec(family, adjustment, covariates)


REGISTRY: dict[str, EstimatorSpec] = {
    "tau_i": _spec("individual"),
    "tau_i_adj": _spec("individual", "lin", ("x",)),
    "tau_i_ancova": _spec("individual", "ancova", ("x",)),
    "tau_t": _spec("cluster_total"),
    "tau_t_adj_n": _spec("cluster_total", "lin", ("size",)),
    "tau_t_adj_nx": _spec("cluster_total", "lin", ("size", "xtilde")),
    "tau_a": _spec("wls_average"),
    "tau_a_adj": _spec("wls_average", "lin", ("xbar",)),
    "tau_api": _spec("wls_average"),
    "tau_api_adj": _spec("wls_average", "lin", ("xbar",)),
    "tau_pia": _spec("weighted_average_ols"),
    "tau_pia_adj": _spec("weighted_average_ols", "lin", ("pi", "pi*xbar")),
}

# estimators whose weights are pinned to uniform 1/M regardless of the
# caller's weight choice
UNIFORM_WEIGHT_NAMES = frozenset({"tau_a", "tau_a_adj"})

RECOMMENDED = frozenset({"tau_t_adj_nx", "tau_pia_adj"})


def estimate_named(sample: d.ClusteredSample, name: str, pi=None,
                   level: float = 0.95,
                   point_only: bool = False) -> EstimatorReport:
    """Run a registry estimator by name."""
    if name not in REGISTRY:
        raise ValueError(f"unknown estimator {name!r}; choose from "
                         f"{sorted(REGISTRY)}")
    spec = REGISTRY[name]
    if name in UNIFORM_WEIGHT_NAMES:
        pi = "uniform"
    report = estimate(sample, spec, pi=pi, level=level, point_only=point_only)
    report.name = name
    report.recommended = name in RECOMMENDED
    return report
