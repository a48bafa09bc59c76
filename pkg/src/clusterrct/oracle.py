"""Ground-truth machinery over the science table.

True estimands, finite-population variance functionals, theoretical asymptotic
standard errors for every estimator, exact enumeration over the assignment
distribution, studentized Fisher randomization tests, and regularity
diagnostics.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import data as d
from .design import EstimatorSpec, cluster_covariate_matrix
from .errors import EnumerationCapError
from .estimators import estimate, estimate_named
from .wls import wls_fit

ENUMERATION_CAP = 1_000_000


@dataclass(frozen=True)
class EstimandSet:
    tau: float        # unit-average treatment effect
    tau_bar: float    # equal-cluster-weight average
    tau_pi: float     # pi-weighted average
    tau_clusters: np.ndarray  # per-cluster effects


def true_estimands(science: d.ScienceTable, pi=None) -> EstimandSet:
    """Exact finite-population estimands from the science table."""
    sums1 = np.add.reduceat(science.y1, science.offsets)
    sums0 = np.add.reduceat(science.y0, science.offsets)
    tau_i = (sums1 - sums0) / science.n
    omega = science.omega
    if pi is None:
        piv = science.pi if science.pi is not None else np.full(science.m,
                                                                1.0 / science.m)
    else:
        piv = np.asarray(pi, dtype=float)
        piv = piv / piv.sum()
    return EstimandSet(tau=float(omega @ tau_i),
                       tau_bar=float(tau_i.mean()),
                       tau_pi=float(piv @ tau_i),
                       tau_clusters=tau_i)


def neyman_variance(e1: np.ndarray, e0: np.ndarray, e: float,
                    rtol: float = 1e-8):
    """Finite-population variance functionals (V, V_c) of centered
    cluster-level potential outcomes.

    V_c is the conservative, estimable version; V subtracts the mean squared
    arm difference. Inputs must be centered over clusters.
    """
    e1 = np.asarray(e1, dtype=float)
    e0 = np.asarray(e0, dtype=float)
    if e1.shape != e0.shape or e1.ndim != 1:
        raise ValueError("arm vectors must be 1-D with equal length")
    if not 0.0 < e < 1.0:
        raise ValueError("treated fraction must be in (0, 1)")
    m = e1.shape[0]
    scale = max(np.abs(e1).max(initial=0.0), np.abs(e0).max(initial=0.0), 1.0)
    if abs(e1.mean()) > rtol * scale or abs(e0.mean()) > rtol * scale:
        raise ValueError("arm vectors must be centered over clusters")
    v_c = float(np.mean(e1 ** 2 / e + e0 ** 2 / (1.0 - e)))
    v = v_c - float(np.mean((e1 - e0) ** 2))
    return v, v_c


# -- theoretical standard errors ----------------------------------------

@dataclass(frozen=True)
class TheoreticalSE:
    se: float               # sqrt(V{r_i(z)} / M), the true asymptotic SE
    conservative_se: float  # sqrt(V_c{r_i(z)} / M), the limit of the estimated SE
    v: float
    v_c: float
    residuals1: np.ndarray = field(repr=False, default=None)
    residuals0: np.ndarray = field(repr=False, default=None)


def _science_arrays(science: d.ScienceTable):
    n = science.n
    scale = science.m / science.n_total
    ybar1, ybar0 = science.y1.mean(), science.y0.mean()
    tot1 = np.add.reduceat(science.y1, science.offsets)
    tot0 = np.add.reduceat(science.y0, science.offsets)
    return {
        "n": n, "scale": scale,
        "ybar": (ybar1, ybar0),
        "ytilde": (tot1 * scale, tot0 * scale),
        "yavg": (tot1 / n, tot0 / n),
        "eps_tilde": ((tot1 - n * ybar1) * scale, (tot0 - n * ybar0) * scale),
    }


def _coef_on_covariates(response, covs, weights=None):
    """Coefficients of covs in the (W)LS fit of response on (1, covs)."""
    design = np.column_stack([np.ones(len(response)), covs])
    fit = wls_fit(design, response, weights,
                  column_names=tuple(f"q{j}" for j in range(design.shape[1])))
    return fit.beta[1:]


def _pseudo_sample(science: d.ScienceTable) -> d.ClusteredSample:
    # covariate resolution only; the alternating assignment is irrelevant
    z = np.arange(science.m) % 2
    return science.reveal(z)


def theoretical_se(science: d.ScienceTable, spec: EstimatorSpec, e: float,
                   pi=None) -> TheoreticalSE:
    """Asymptotic SE of an estimator, built from the theorem-specific
    cluster-level residuals of the science table."""
    arr = _science_arrays(science)
    m = science.m

    if spec.family == "individual":
        if spec.adjustment == "none":
            r1, r0 = arr["eps_tilde"]
        else:
            xc = science.x - science.x.mean(axis=0)
            xt = np.add.reduceat(xc, science.offsets, axis=0) * arr["scale"]
            eps1 = science.y1 - arr["ybar"][0]
            eps0 = science.y0 - arr["ybar"][1]
            q1 = _coef_on_covariates(eps1, xc)
            q0 = _coef_on_covariates(eps0, xc)
            if spec.adjustment == "ancova":
                q1 = q0 = e * q1 + (1.0 - e) * q0
            r1 = arr["eps_tilde"][0] - xt @ q1
            r0 = arr["eps_tilde"][1] - xt @ q0
    elif spec.family == "cluster_total":
        y1t, y0t = arr["ytilde"]
        if spec.adjustment == "none":
            r1 = y1t - y1t.mean()
            r0 = y0t - y0t.mean()
        else:
            sample = _pseudo_sample(science)
            cmat, _ = cluster_covariate_matrix(sample, spec.covariates or ("c",))
            cmat = cmat - cmat.mean(axis=0)
            q1 = _coef_on_covariates(y1t, cmat)
            q0 = _coef_on_covariates(y0t, cmat)
            if spec.adjustment == "ancova":
                q1 = q0 = e * q1 + (1.0 - e) * q0
            r1 = y1t - y1t.mean() - cmat @ q1
            r0 = y0t - y0t.mean() - cmat @ q0
    elif spec.family in ("wls_average", "weighted_average_ols"):
        sample = _pseudo_sample(science)
        piv = d.resolve_weights(sample, pi)
        a1, a0 = arr["yavg"]
        ybar_pi = (piv @ a1, piv @ a0)
        if spec.family == "wls_average":
            if spec.adjustment == "none":
                r1 = m * piv * (a1 - ybar_pi[0])
                r0 = m * piv * (a0 - ybar_pi[1])
            else:
                cmat, _ = cluster_covariate_matrix(sample, spec.covariates, piv)
                cmat = cmat - piv @ cmat
                q1 = _coef_on_covariates(a1, cmat, weights=piv)
                q0 = _coef_on_covariates(a0, cmat, weights=piv)
                r1 = m * piv * (a1 - ybar_pi[0] - cmat @ q1)
                r0 = m * piv * (a0 - ybar_pi[1] - cmat @ q0)
        else:
            w1 = m * piv * a1
            w0 = m * piv * a0
            if spec.adjustment == "none":
                r1 = w1 - w1.mean()
                r0 = w0 - w0.mean()
            else:
                cmat, _ = cluster_covariate_matrix(sample, spec.covariates, piv)
                cmat = cmat - cmat.mean(axis=0)
                q1 = _coef_on_covariates(w1, cmat)
                q0 = _coef_on_covariates(w0, cmat)
                r1 = w1 - w1.mean() - cmat @ q1
                r0 = w0 - w0.mean() - cmat @ q0
    else:  # pragma: no cover
        raise ValueError(spec.family)

    v, v_c = neyman_variance(r1, r0, e)
    return TheoreticalSE(se=math.sqrt(max(v, 0.0) / m),
                         conservative_se=math.sqrt(v_c / m),
                         v=v, v_c=v_c, residuals1=r1, residuals0=r0)


# -- exact assignment-distribution enumeration ---------------------------

@dataclass(frozen=True)
class ExactDistribution:
    mean: float
    variance: float
    mse: float
    estimand: float
    n_assignments: int


def _treated_count(m: int, e: float) -> int:
    t = e * m
    k = round(t)
    if abs(t - k) > 1e-9 or not 0 < k < m:
        raise ValueError(f"e*M must be an integer strictly between 0 and M; "
                         f"got e={e}, M={m}")
    return k


def enumerate_assignments(m: int, n_treated: int):
    """All assignments with n_treated treated clusters, lexicographic over
    treated index sets."""
    for combo in itertools.combinations(range(m), n_treated):
        z = np.zeros(m, dtype=int)
        z[list(combo)] = 1
        yield z


def exact_distribution(science: d.ScienceTable, spec: EstimatorSpec, e: float,
                       pi=None, cap: int = ENUMERATION_CAP) -> ExactDistribution:
    """Exhaustive mean/variance/MSE of an estimator over all assignments."""
    m = science.m
    k = _treated_count(m, e)
    total = math.comb(m, k)
    if total > cap:
        raise EnumerationCapError(
            f"{total} assignments exceed the cap of {cap}; use Monte Carlo")
    targets = true_estimands(science, pi=pi)
    estimand = (targets.tau if spec.family in ("individual", "cluster_total")
                else targets.tau_pi)
    piv = None
    if spec.weights == "pi":
        piv = d.resolve_weights(_pseudo_sample(science), pi)
    ests = np.empty(total)
    for t, z in enumerate(enumerate_assignments(m, k)):
        sample = science.reveal(z)
        ests[t] = estimate(sample, spec, pi=piv, point_only=True).estimate
    mean = float(ests.mean())
    return ExactDistribution(
        mean=mean,
        variance=float(np.mean((ests - mean) ** 2)),
        mse=float(np.mean((ests - estimand) ** 2)),
        estimand=estimand,
        n_assignments=total,
    )


# -- Fisher randomization test -------------------------------------------

@dataclass(frozen=True)
class FRTResult:
    p_value: float
    statistic: float
    n_reference: int
    exact: bool
    zero_se_count: int
    seed: int | None
    reference_mean: float
    reference_max: float


def _studentized(sample: d.ClusteredSample, spec, pi, level=0.95) -> float:
    if isinstance(spec, str):
        rep = estimate_named(sample, spec, pi=pi, level=level)
    else:
        rep = estimate(sample, spec, pi=pi, level=level)
    if rep.se == 0.0:
        return 0.0
    return abs(rep.estimate / rep.se)


def fisher_randomization_test(sample: d.ClusteredSample, spec,
                              draws: int = 1000, exact: bool = False,
                              seed: int | None = None,
                              cap: int = ENUMERATION_CAP) -> FRTResult:
    """Studentized FRT under the sharp null; observed outcomes held fixed.

    exact mode enumerates every assignment with the observed treated count;
    Monte Carlo mode uses the add-one (observed-included) p-value. A draw with
    a zero SE contributes a statistic of 0 and is counted in zero_se_count.
    """
    m = sample.m
    k = int(sample.z.sum())
    piv = None
    spec_obj = spec
    if isinstance(spec, str):
        from .estimators import REGISTRY, UNIFORM_WEIGHT_NAMES
        spec_obj = REGISTRY[spec]
        if spec in UNIFORM_WEIGHT_NAMES:
            piv = np.full(m, 1.0 / m)
    if spec_obj.weights == "pi" and piv is None:
        piv = d.resolve_weights(sample, None)
    t_obs = _studentized(sample, spec, piv)

    zero_se = 0
    stats = []
    if exact:
        total = math.comb(m, k)
        if total > cap:
            raise EnumerationCapError(
                f"{total} assignments exceed the cap of {cap}; use Monte Carlo")
        for z in enumerate_assignments(m, k):
            t = _studentized(sample.replace(z=z), spec, piv)
            if t == 0.0:
                zero_se += 1
            stats.append(t)
        stats = np.asarray(stats)
        p = float(np.mean(stats >= t_obs))
        n_ref = total
    else:
        if draws < 1:
            raise ValueError("draws must be >= 1")
        rng = np.random.default_rng(seed)
        for _ in range(draws):
            z = np.zeros(m, dtype=int)
            z[rng.permutation(m)[:k]] = 1
            t = _studentized(sample.replace(z=z), spec, piv)
            if t == 0.0:
                zero_se += 1
            stats.append(t)
        stats = np.asarray(stats)
        p = (float(np.sum(stats >= t_obs)) + 1.0) / (draws + 1.0)
        n_ref = draws
    return FRTResult(p_value=p, statistic=t_obs, n_reference=n_ref,
                     exact=exact, zero_se_count=zero_se, seed=seed,
                     reference_mean=float(stats.mean()),
                     reference_max=float(stats.max()))


# -- regularity diagnostics ----------------------------------------------

@dataclass(frozen=True)
class RegularityReport:
    omega_max: float
    omega_tilde_max: float
    omega_tilde_second_moment: float
    omega_tilde_fourth_moment: float
    flags: tuple


def regularity_diagnostics(sample) -> RegularityReport:
    """Finite-sample analogues of the asymptotic cluster-size conditions.

    Thresholds are advisory: a cluster holding more than 10% of all units, or
    a relative size above five times the median, is flagged.
    """
    wt = sample.omega_tilde
    flags = []
    if sample.omega.max() > 0.1:
        flags.append("dominant_cluster")
    if wt.max() > 5.0 * np.median(wt):
        flags.append("heavy_tailed_sizes")
    return RegularityReport(
        omega_max=float(sample.omega.max()),
        omega_tilde_max=float(wt.max()),
        omega_tilde_second_moment=float(np.mean(wt ** 2)),
        omega_tilde_fourth_moment=float(np.mean(wt ** 4)),
        flags=tuple(flags),
    )
