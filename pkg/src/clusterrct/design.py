"""Regression design assembly for the four estimator families.

Covariate selections are named tokens resolved against the sample:

  "x"       unit-level covariates (individual family only)
  "size"    relative cluster size n_i * M / N
  "xtilde"  scaled cluster totals of the unit covariates
  "xbar"    cluster averages of the unit covariates
  "c"       the cluster covariates supplied with the sample
  "pi"      the cluster weights (requires weights)
  "pi*TOK"  pi times another cluster-level token, e.g. "pi*xbar", "pi*c"

Centering happens here, recomputed from the sample at fit time, before any
interaction columns are formed.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import data as d
from .errors import InsufficientDataError, SchemaError

FAMILIES = ("individual", "cluster_total", "wls_average", "weighted_average_ols")
ADJUSTMENTS = ("none", "lin", "ancova")


@dataclass(frozen=True)
class EstimatorSpec:
    family: str
    adjustment: str = "none"
    covariates: tuple = ()
    weights: str = "none"  # "none" | "pi"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.adjustment not in ADJUSTMENTS:
            raise ValueError(f"unknown adjustment {self.adjustment!r}")
        if self.adjustment == "ancova" and self.family not in (
                "individual", "cluster_total"):
            raise ValueError("ancova applies only to the individual and "
                             "cluster_total families")
        if self.family in ("wls_average", "weighted_average_ols") \
                and self.weights != "pi":
            object.__setattr__(self, "weights", "pi")
        object.__setattr__(self, "covariates", tuple(self.covariates))


@dataclass
class Design:
    response: np.ndarray
    matrix: np.ndarray
    weights: np.ndarray | None
    treatment_index: int
    column_names: tuple
    row_offsets: np.ndarray | None = None  # unit rows: cluster block starts
    dropped: tuple = field(default_factory=tuple)


def _resolve_cluster_token(sample: d.ClusteredSample, token: str,
                           pi: np.ndarray | None):
    if token.startswith("pi*"):
        base, names = _resolve_cluster_token(sample, token[3:], pi)
        if pi is None:
            raise SchemaError(f"token {token!r} requires weights")
        return base * pi[:, None], tuple(f"pi*{n}" for n in names)
    if token == "size":
        return sample.omega_tilde[:, None], ("size",)
    if token == "xtilde":
        xt = d.scaled_x_totals(sample)
        return xt, tuple(f"xtilde{j+1}" for j in range(xt.shape[1]))
    if token == "xbar":
        xb = d.x_averages(sample)
        return xb, tuple(f"xbar{j+1}" for j in range(xb.shape[1]))
    if token == "c":
        if sample.c is None:
            raise SchemaError("sample has no cluster covariates")
        return sample.c, tuple(f"c{j+1}" for j in range(sample.c.shape[1]))
    if token == "pi":
        if pi is None:
            raise SchemaError("token 'pi' requires weights")
        return pi[:, None], ("pi",)
    raise SchemaError(f"unknown covariate token {token!r}")


def cluster_covariate_matrix(sample: d.ClusteredSample, tokens,
                             pi: np.ndarray | None = None):
    """Stack the requested cluster-level covariate columns, uncentered."""
    mats, names = [], []
    for tok in tokens:
        mat, nm = _resolve_cluster_token(sample, tok, pi)
        mats.append(mat)
        names.extend(nm)
    if not mats:
        raise SchemaError("adjusted estimator needs at least one covariate")
    return np.column_stack(mats), tuple(names)


def _drop_constant_columns(cmat: np.ndarray, names: tuple):
    """Drop covariate columns that are identically zero after centering."""
    scale = np.abs(cmat).max(axis=0)
    keep = scale > 1e-12
    dropped = tuple(n for n, k in zip(names, keep) if not k)
    if dropped:
        warnings.warn(f"dropping constant covariate column(s) after centering: "
                      f"{', '.join(dropped)}", stacklevel=3)
    return cmat[:, keep], tuple(n for n, k in zip(names, keep) if k), dropped


def _assemble(z: np.ndarray, cov: np.ndarray | None, names: tuple,
              adjustment: str):
    cols = [np.ones_like(z, dtype=float), z.astype(float)]
    out_names = ["intercept", "z"]
    if cov is not None and cov.shape[1] > 0 and adjustment != "none":
        cols.append(cov)
        out_names.extend(names)
        if adjustment == "lin":
            cols.append(z[:, None] * cov)
            out_names.extend(f"z:{n}" for n in names)
    return np.column_stack(cols), tuple(out_names)


def build_design(sample: d.ClusteredSample, spec: EstimatorSpec,
                 pi: np.ndarray | None = None) -> Design:
    """Assemble (response, design matrix, weights) for a spec.

    Columns are ordered (intercept, Z, covariates, Z x covariates); the
    treatment coefficient is always column 1.
    """
    if spec.weights == "pi" and pi is None:
        pi = d.resolve_weights(sample, None)

    if spec.family == "individual":
        dropped = ()
        if spec.adjustment == "none":
            xmat, names = None, ()
        else:
            if sample.x is None:
                raise SchemaError("adjusted individual regression requires "
                                  "unit covariates")
            xmat = sample.x - sample.x.mean(axis=0)
            names = tuple(f"x{j+1}" for j in range(xmat.shape[1]))
            xmat, names, dropped = _drop_constant_columns(xmat, names)
        mat, colnames = _assemble(sample.z_units, xmat, names, spec.adjustment)
        return Design(response=sample.y, matrix=mat, weights=None,
                      treatment_index=1, column_names=colnames,
                      row_offsets=sample.offsets, dropped=dropped)

    # cluster-level families
    dropped = ()
    cmat, names = None, ()
    if spec.adjustment != "none":
        tokens = spec.covariates or (("c",) if sample.c is not None else ())
        cmat, names = cluster_covariate_matrix(sample, tokens, pi)
        if spec.family == "wls_average":
            center = pi @ cmat  # centered at the pi-weighted mean
        else:
            center = cmat.mean(axis=0)
        cmat = cmat - center
        cmat, names, dropped = _drop_constant_columns(cmat, names)
        p_c = cmat.shape[1]
        min_m = 2 + (2 * p_c if spec.adjustment == "lin" else p_c)
        if sample.m <= min_m:
            raise InsufficientDataError(
                f"need more than {min_m} clusters for this adjustment; have "
                f"{sample.m}")

    if spec.family == "cluster_total":
        response = d.scaled_cluster_totals(sample)
        weights = None
    elif spec.family == "wls_average":
        response = d.cluster_averages(sample)
        weights = pi
    elif spec.family == "weighted_average_ols":
        response = sample.m * pi * d.cluster_averages(sample)
        weights = None
    else:  # pragma: no cover
        raise ValueError(spec.family)

    mat, colnames = _assemble(sample.z, cmat, names, spec.adjustment)
    return Design(response=response, matrix=mat, weights=weights,
                  treatment_index=1, column_names=colnames,
                  row_offsets=None, dropped=dropped)
