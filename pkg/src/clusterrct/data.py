"""Clustered-data model: observed samples, science tables, and aggregation.

Units are stored in one flat block grouped by cluster; cluster order is the
canonical iteration order everywhere (assignment vectors, enumeration, RNG
streams). All containers are immutable after construction.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import SchemaError


def _as_float_matrix(a, name: str) -> np.ndarray | None:
    if a is None:
        return None
    out = np.asarray(a, dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    if not np.all(np.isfinite(out)):
        raise SchemaError(f"{name} contains non-finite or missing values")
    return out


def _check_grouped(cluster_index: np.ndarray, m: int) -> None:
    if np.any(np.diff(cluster_index) < 0):
        raise SchemaError("units must be stored grouped by cluster, in cluster order")
    if cluster_index.min() != 0 or cluster_index.max() != m - 1:
        raise SchemaError("cluster_index must cover 0..M-1")


@dataclass(frozen=True)
class ClusteredSample:
    """Observed data from a cluster-randomized experiment.

    z is the cluster-level treatment indicator; y, x are unit-level (length N,
    grouped by cluster via cluster_index); c and pi are cluster-level.
    """

    z: np.ndarray                 # (M,) in {0,1}
    y: np.ndarray                 # (N,)
    cluster_index: np.ndarray     # (N,) unit -> cluster position
    x: np.ndarray | None = None   # (N, p_x)
    c: np.ndarray | None = None   # (M, p_c)
    pi: np.ndarray | None = None  # (M,) positive, normalized to sum 1
    ids: tuple = ()               # cluster labels, for reporting

    def __post_init__(self):
        z = np.asarray(self.z, dtype=int)
        y = np.asarray(self.y, dtype=float)
        idx = np.asarray(self.cluster_index, dtype=int)
        if not np.all((z == 0) | (z == 1)):
            raise SchemaError("treatment indicator must be 0 or 1")
        if not np.all(np.isfinite(y)):
            raise SchemaError("outcomes contain non-finite or missing values")
        m = z.shape[0]
        if m < 1:
            raise SchemaError("need at least one cluster")
        _check_grouped(idx, m)
        counts = np.bincount(idx, minlength=m)
        if counts.min() < 1:
            raise SchemaError("every cluster must contain at least one unit")
        x = _as_float_matrix(self.x, "unit covariates")
        c = _as_float_matrix(self.c, "cluster covariates")
        if x is not None and x.shape[0] != y.shape[0]:
            raise SchemaError("unit covariates must have one row per unit")
        if c is not None and c.shape[0] != m:
            raise SchemaError("cluster covariates must have one row per cluster")
        pi = self.pi
        if pi is not None:
            pi = np.asarray(pi, dtype=float)
            if pi.shape[0] != m:
                raise SchemaError("weights must have one entry per cluster")
            if not np.all(np.isfinite(pi)) or np.any(pi <= 0):
                raise SchemaError("weights must be positive and finite")
            pi = pi / pi.sum()
        ids = tuple(self.ids) if self.ids else tuple(range(m))
        if len(ids) != m:
            raise SchemaError("ids must have one entry per cluster")
        for name, val in (("z", z), ("y", y), ("cluster_index", idx), ("x", x),
                          ("c", c), ("pi", pi), ("ids", ids)):
            object.__setattr__(self, name, val)
        for arr in (z, y, idx, x, c, pi):
            if arr is not None:
                arr.setflags(write=False)

    # -- derived scalars -------------------------------------------------
    @property
    def m(self) -> int:
        return self.z.shape[0]

    @property
    def n_total(self) -> int:
        return self.y.shape[0]

    @property
    def n(self) -> np.ndarray:
        return np.bincount(self.cluster_index, minlength=self.m)

    @property
    def offsets(self) -> np.ndarray:
        """Start offset of each cluster's unit block."""
        n = self.n
        out = np.empty(self.m, dtype=int)
        out[0] = 0
        np.cumsum(n[:-1], out=out[1:])
        return out

    @property
    def n_treated_units(self) -> int:
        return int(self.n[self.z == 1].sum())

    @property
    def n_control_units(self) -> int:
        return self.n_total - self.n_treated_units

    @property
    def e(self) -> float:
        """Realized fraction of treated clusters."""
        return float(self.z.mean())

    @property
    def omega(self) -> np.ndarray:
        return self.n / self.n_total

    @property
    def omega_tilde(self) -> np.ndarray:
        return self.n * self.m / self.n_total

    @property
    def omega_max(self) -> float:
        return float(self.omega.max())

    @property
    def p_x(self) -> int:
        return 0 if self.x is None else self.x.shape[1]

    @property
    def p_c(self) -> int:
        return 0 if self.c is None else self.c.shape[1]

    @property
    def z_units(self) -> np.ndarray:
        return self.z[self.cluster_index]

    def replace(self, **kw) -> "ClusteredSample":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class ScienceTable:
    """Full potential-outcome table: both arms for every unit, no assignment."""

    y1: np.ndarray
    y0: np.ndarray
    cluster_index: np.ndarray
    x: np.ndarray | None = None
    c: np.ndarray | None = None
    pi: np.ndarray | None = None
    ids: tuple = ()

    def __post_init__(self):
        y1 = np.asarray(self.y1, dtype=float)
        y0 = np.asarray(self.y0, dtype=float)
        idx = np.asarray(self.cluster_index, dtype=int)
        if y1.shape != y0.shape:
            raise SchemaError("potential-outcome arms must have identical shape")
        if not (np.all(np.isfinite(y1)) and np.all(np.isfinite(y0))):
            raise SchemaError("potential outcomes must be finite for every unit")
        m = idx.max() + 1 if idx.size else 0
        if m < 1:
            raise SchemaError("need at least one cluster")
        _check_grouped(idx, m)
        x = _as_float_matrix(self.x, "unit covariates")
        c = _as_float_matrix(self.c, "cluster covariates")
        pi = self.pi
        if pi is not None:
            pi = np.asarray(pi, dtype=float)
            if np.any(pi <= 0) or not np.all(np.isfinite(pi)):
                raise SchemaError("weights must be positive and finite")
            pi = pi / pi.sum()
        ids = tuple(self.ids) if self.ids else tuple(range(m))
        for name, val in (("y1", y1), ("y0", y0), ("cluster_index", idx),
                          ("x", x), ("c", c), ("pi", pi), ("ids", ids)):
            object.__setattr__(self, name, val)
        for arr in (y1, y0, idx, x, c, pi):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def m(self) -> int:
        return int(self.cluster_index.max()) + 1

    @property
    def n_total(self) -> int:
        return self.y1.shape[0]

    @property
    def n(self) -> np.ndarray:
        return np.bincount(self.cluster_index, minlength=self.m)

    @property
    def omega(self) -> np.ndarray:
        return self.n / self.n_total

    @property
    def omega_tilde(self) -> np.ndarray:
        return self.n * self.m / self.n_total

    @property
    def offsets(self) -> np.ndarray:
        n = self.n
        out = np.empty(self.m, dtype=int)
        out[0] = 0
        np.cumsum(n[:-1], out=out[1:])
        return out

    def reveal(self, z: np.ndarray) -> ClusteredSample:
        """Observed sample under cluster assignment z."""
        z = np.asarray(z, dtype=int)
        y = np.where(z[self.cluster_index] == 1, self.y1, self.y0)
        return ClusteredSample(z=z, y=y, cluster_index=self.cluster_index,
                               x=self.x, c=self.c, pi=self.pi, ids=self.ids)


@dataclass(frozen=True)
class ClusterAggregate:
    """Per-cluster summaries used by the cluster-level regressions."""

    scaled_total: float        # cluster total outcome times M/N
    average: float
    scaled_x_total: np.ndarray | None
    x_average: np.ndarray | None
    size: int
    pi: float | None


def cluster_sums(sample: ClusteredSample, values: np.ndarray) -> np.ndarray:
    """Per-cluster sums of a unit-level vector or matrix."""
    return np.add.reduceat(values, sample.offsets, axis=0)


def aggregate(sample: ClusteredSample) -> list[ClusterAggregate]:
    """Aggregate unit rows to one ClusterAggregate per cluster, order preserved."""
    n = sample.n
    scale = sample.m / sample.n_total
    tot_y = cluster_sums(sample, sample.y)
    avg_y = tot_y / n
    if sample.x is not None:
        tot_x = cluster_sums(sample, sample.x)
        avg_x = tot_x / n[:, None]
    out = []
    for i in range(sample.m):
        out.append(ClusterAggregate(
            scaled_total=float(tot_y[i] * scale),
            average=float(avg_y[i]),
            scaled_x_total=tot_x[i] * scale if sample.x is not None else None,
            x_average=avg_x[i] if sample.x is not None else None,
            size=int(n[i]),
            pi=float(sample.pi[i]) if sample.pi is not None else None,
        ))
    return out


def scaled_cluster_totals(sample: ClusteredSample) -> np.ndarray:
    """(M,) vector of scaled cluster total outcomes."""
    return cluster_sums(sample, sample.y) * (sample.m / sample.n_total)


def cluster_averages(sample: ClusteredSample) -> np.ndarray:
    return cluster_sums(sample, sample.y) / sample.n


def scaled_x_totals(sample: ClusteredSample) -> np.ndarray:
    if sample.x is None:
        raise SchemaError("sample has no unit covariates")
    return cluster_sums(sample, sample.x) * (sample.m / sample.n_total)


def x_averages(sample: ClusteredSample) -> np.ndarray:
    if sample.x is None:
        raise SchemaError("sample has no unit covariates")
    return cluster_sums(sample, sample.x) / sample.n[:, None]


def center_unit_covariates(sample: ClusteredSample) -> ClusteredSample:
    """Center unit covariates to zero mean over all N units."""
    if sample.x is None:
        raise SchemaError("sample has no unit covariates")
    return sample.replace(x=sample.x - sample.x.mean(axis=0))


def center_cluster_covariates(sample: ClusteredSample,
                              mode: str = "unweighted") -> ClusteredSample:
    """Center cluster covariates over clusters, unweighted or at the
    pi-weighted mean."""
    if sample.c is None:
        raise SchemaError("sample has no cluster covariates")
    if mode == "unweighted":
        center = sample.c.mean(axis=0)
    elif mode == "pi_weighted":
        if sample.pi is None:
            raise SchemaError("pi_weighted centering requires weights")
        center = sample.pi @ sample.c
    else:
        raise ValueError(f"unknown centering mode {mode!r}")
    return sample.replace(c=sample.c - center)


def resolve_weights(sample: ClusteredSample, choice) -> np.ndarray:
    """Resolve a weight choice to a normalized (M,) vector.

    choice: "omega" (cluster-size shares), "uniform" (1/M), an array of raw
    positive weights, or None (use sample.pi, falling back to uniform).
    """
    if choice is None:
        if sample.pi is not None:
            return sample.pi
        choice = "uniform"
    if isinstance(choice, str):
        if choice == "omega":
            return sample.omega
        if choice == "uniform":
            return np.full(sample.m, 1.0 / sample.m)
        raise ValueError(f"unknown weight choice {choice!r}")
    pi = np.asarray(choice, dtype=float)
    if pi.shape != (sample.m,):
        raise SchemaError("weights must have one entry per cluster")
    if np.any(pi <= 0) or not np.all(np.isfinite(pi)):
        raise SchemaError("weights must be positive and finite")
    return pi / pi.sum()


# -- CSV ingestion -------------------------------------------------------

def _covariate_columns(columns, prefix: str) -> list[str]:
    names = [c for c in columns if c.startswith(prefix)]
    expected = [f"{prefix}{k}" for k in range(1, len(names) + 1)]
    if sorted(names) != sorted(expected):
        raise SchemaError(
            f"covariate columns with prefix {prefix!r} must be numbered "
            f"{prefix}1..{prefix}{len(names)}; found {sorted(names)}")
    return expected


def load_sample_csv(path) -> ClusteredSample:
    """Load the unit-level long-format CSV.

    Required columns: cluster_id, z, y; optional x_1..x_px, c_1..c_pc, pi.
    z, c_* and pi must be constant within cluster.
    """
    try:
        df = pd.read_csv(path)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise SchemaError(f"cannot parse CSV {path}: {exc}") from exc
    for col in ("cluster_id", "z", "y"):
        if col not in df.columns:
            raise SchemaError(f"missing required column {col!r}")
    if len(df) == 0:
        raise SchemaError("CSV contains no data rows")
    if df.isna().any().any():
        bad = df.columns[df.isna().any()].tolist()
        raise SchemaError(f"missing values in columns {bad}; complete data required")

    x_cols = _covariate_columns(df.columns, "x_")
    c_cols = _covariate_columns(df.columns, "c_")

    # canonical cluster order: order of first appearance
    ids = list(dict.fromkeys(df["cluster_id"].tolist()))
    pos = {cid: k for k, cid in enumerate(ids)}
    order = df["cluster_id"].map(pos).to_numpy()
    df = df.iloc[np.argsort(order, kind="stable")].reset_index(drop=True)
    idx = df["cluster_id"].map(pos).to_numpy()
    m = len(ids)

    z_units = df["z"].to_numpy()
    if not np.isin(z_units, (0, 1)).all():
        raise SchemaError("column 'z' must contain only 0 or 1")
    for col in ["z"] + c_cols + (["pi"] if "pi" in df.columns else []):
        per_cluster = df.groupby("cluster_id", sort=False)[col].nunique()
        if (per_cluster > 1).any():
            bad = per_cluster[per_cluster > 1].index.tolist()
            raise SchemaError(f"column {col!r} varies within cluster(s) {bad}")

    first = np.searchsorted(idx, np.arange(m))
    z = z_units[first].astype(int)
    c = df[c_cols].to_numpy()[first] if c_cols else None
    pi = df["pi"].to_numpy()[first] if "pi" in df.columns else None
    x = df[x_cols].to_numpy() if x_cols else None
    return ClusteredSample(z=z, y=df["y"].to_numpy(dtype=float),
                           cluster_index=idx, x=x, c=c, pi=pi, ids=tuple(ids))


def load_science_csv(path) -> ScienceTable:
    """Load a user-supplied science table CSV.

    Required columns: cluster_id, y1, y0; optional x_1..x_px, c_1..c_pc, pi.
    """
    try:
        df = pd.read_csv(path)
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise SchemaError(f"cannot parse CSV {path}: {exc}") from exc
    for col in ("cluster_id", "y1", "y0"):
        if col not in df.columns:
            raise SchemaError(f"missing required column {col!r}")
    if df.isna().any().any():
        raise SchemaError("missing values present; complete data required")
    x_cols = _covariate_columns(df.columns, "x_")
    c_cols = _covariate_columns(df.columns, "c_")
    ids = list(dict.fromkeys(df["cluster_id"].tolist()))
    pos = {cid: k for k, cid in enumerate(ids)}
    order = df["cluster_id"].map(pos).to_numpy()
    df = df.iloc[np.argsort(order, kind="stable")].reset_index(drop=True)
    idx = df["cluster_id"].map(pos).to_numpy()
    m = len(ids)
    first = np.searchsorted(idx, np.arange(m))
    return ScienceTable(
        y1=df["y1"].to_numpy(dtype=float),
        y0=df["y0"].to_numpy(dtype=float),
        cluster_index=idx,
        x=df[x_cols].to_numpy() if x_cols else None,
        c=df[c_cols].to_numpy()[first] if c_cols else None,
        pi=df["pi"].to_numpy()[first] if "pi" in df.columns else None,
        ids=tuple(ids),
    )
