"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: SchemaError -> 2, InsufficientDataError -> 3,
NumericalError (incl. RankDeficiencyError) -> 4.
"""


class ClusterRCTError(Exception):
    """Base class for all package errors."""


class SchemaError(ClusterRCTError):
    """Malformed input data: bad CSV schema, invalid values, broken invariants."""


class InsufficientDataError(ClusterRCTError):
    """Structurally valid data that cannot support the requested analysis
    (e.g. a single-arm sample, or too few clusters for the requested adjustment)."""


class NumericalError(ClusterRCTError):
    """Numerical failure during estimation."""


class RankDeficiencyError(NumericalError):
    """Design matrix is rank deficient; carries the names of the dependent columns."""

    def __init__(self, columns):
        self.columns = list(columns)
        super().__init__(
            "design matrix is rank deficient; linearly dependent columns: "
            + ", ".join(self.columns)
        )


class EnumerationCapError(ClusterRCTError):
    """Exact enumeration would exceed the assignment cap; use Monte Carlo instead."""
