"""Weighted least squares with robust sandwich covariances.

The solve goes through a QR factorization of the weighted design (never the
normal equations). Sandwiches are the uncorrected HC0 / CR0 forms; an optional
multiplier hook exists for finite-sample corrections but defaults to 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import RankDeficiencyError

RANK_RTOL = 1e-10


@dataclass
class FitResult:
    beta: np.ndarray
    residuals: np.ndarray
    xtwx_inv: np.ndarray
    design: np.ndarray
    weights: np.ndarray
    treatment_index: int = 1
    column_names: tuple = ()
    cov_hw: np.ndarray | None = field(default=None, repr=False)
    cov_lz: np.ndarray | None = field(default=None, repr=False)

    @property
    def fitted(self) -> np.ndarray:
        return self.design @ self.beta


def _check_rank(xw: np.ndarray, names) -> None:
    ncol = xw.shape[1]
    sv = np.linalg.svd(xw, compute_uv=False)
    tol = sv[0] * RANK_RTOL * ncol if sv.size else 0.0
    rank = int(np.sum(sv > tol))
    if rank < ncol:
        # name the columns loading on the null space
        _, _, vt = np.linalg.svd(xw)
        null = vt[rank:]
        involved = np.any(np.abs(null) > 1e-8, axis=0)
        cols = [names[j] if j < len(names) else f"col{j}"
                for j in np.flatnonzero(involved)]
        raise RankDeficiencyError(cols or [f"col{j}" for j in range(ncol)])


def wls_fit(design: np.ndarray, response: np.ndarray,
            weights: np.ndarray | None = None,
            treatment_index: int = 1,
            column_names: tuple = ()) -> FitResult:
    """Fit WLS via QR of the row-weighted design.

    weights are per-row and must be positive; None means OLS.
    """
    x = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if x.ndim != 2 or x.shape[0] < x.shape[1]:
        raise ValueError("design must be 2-D with at least as many rows as columns")
    w = np.ones(x.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if not column_names:
        column_names = tuple(f"col{j}" for j in range(x.shape[1]))

    sw = np.sqrt(w)
    xw = x * sw[:, None]
    _check_rank(xw, column_names)
    q, r = np.linalg.qr(xw)
    beta = np.linalg.solve(r, q.T @ (y * sw))
    r_inv = np.linalg.solve(r, np.eye(r.shape[0]))
    xtwx_inv = r_inv @ r_inv.T
    return FitResult(beta=beta, residuals=y - x @ beta, xtwx_inv=xtwx_inv,
                     design=x, weights=w, treatment_index=treatment_index,
                     column_names=tuple(column_names))


def hw_sandwich(fit: FitResult, multiplier: float = 1.0) -> np.ndarray:
    """HC0 sandwich treating rows as independent."""
    scores = fit.design * (fit.weights * fit.residuals)[:, None]
    meat = scores.T @ scores
    cov = multiplier * (fit.xtwx_inv @ meat @ fit.xtwx_inv)
    fit.cov_hw = cov
    return cov


def cr_sandwich(fit: FitResult, cluster_ids, multiplier: float = 1.0) -> np.ndarray:
    """CR0 sandwich aggregating score contributions within clusters.

    Reduces to hw_sandwich when every cluster is a singleton.
    """
    ids = np.asarray(cluster_ids)
    if ids.shape[0] != fit.design.shape[0]:
        raise ValueError("every row must be mapped to a cluster")
    _, codes = np.unique(ids, return_inverse=True)
    scores = fit.design * (fit.weights * fit.residuals)[:, None]
    totals = np.zeros((codes.max() + 1, scores.shape[1]))
    np.add.at(totals, codes, scores)
    meat = totals.T @ totals
    cov = multiplier * (fit.xtwx_inv @ meat @ fit.xtwx_inv)
    fit.cov_lz = cov
    return cov


def cr_sandwich_grouped(fit: FitResult, offsets: np.ndarray,
                        multiplier: float = 1.0) -> np.ndarray:
    """CR0 for rows already grouped by cluster; offsets are block starts."""
    scores = fit.design * (fit.weights * fit.residuals)[:, None]
    totals = np.add.reduceat(scores, offsets, axis=0)
    meat = totals.T @ totals
    cov = multiplier * (fit.xtwx_inv @ meat @ fit.xtwx_inv)
    fit.cov_lz = cov
    return cov


def cr_treatment_variance_alt(z_units: np.ndarray, y: np.ndarray,
                              x: np.ndarray | None,
                              offsets: np.ndarray) -> float:
    """Treatment-coefficient CR0 variance via the re-parameterized design
    (Z, 1-Z, Zx, (1-Z)x), read off as the (1,1)+(2,2)-2(1,2) contrast.

    Cross-check oracle for the individual-level regressions; algebraically
    identical to the (1, Z, x, Zx) route.
    """
    zcol = z_units.astype(float)
    cols = [zcol, 1.0 - zcol]
    if x is not None:
        cols.extend((zcol[:, None] * x).T)
        cols.extend(((1.0 - zcol)[:, None] * x).T)
    design = np.column_stack(cols)
    fit = wls_fit(design, y, treatment_index=0,
                  column_names=tuple(f"a{j}" for j in range(design.shape[1])))
    cov = cr_sandwich_grouped(fit, offsets)
    return float(cov[0, 0] + cov[1, 1] - 2.0 * cov[0, 1])
