"""Design-based analysis of cluster-randomized experiments."""

from .data import (ClusterAggregate, ClusteredSample, ScienceTable, aggregate,
                   center_cluster_covariates, center_unit_covariates,
                   load_sample_csv, load_science_csv, resolve_weights)
from .design import EstimatorSpec, build_design
from .errors import (ClusterRCTError, EnumerationCapError,
                     InsufficientDataError, NumericalError,
                     RankDeficiencyError, SchemaError)
from .estimators import (REGISTRY, EstimatorReport, cluster_total_regression,
                         estimate, estimate_named, individual_regression,
                         weighted_average_ols_regression,
                         wls_average_regression)
from .oracle import (EstimandSet, ExactDistribution, FRTResult,
                     RegularityReport, TheoreticalSE, exact_distribution,
                     fisher_randomization_test, neyman_variance,
                     regularity_diagnostics, theoretical_se, true_estimands)
from .simulate import (DEFAULT_ESTIMATORS, SCENARIO_IDS, MetricsRow, Scenario,
                       make_scenario, run_monte_carlo)
from .wls import FitResult, cr_sandwich, hw_sandwich, wls_fit

__version__ = "0.1.0"

__all__ = [
    "ClusterAggregate", "ClusteredSample", "ScienceTable", "aggregate",
    "center_cluster_covariates", "center_unit_covariates", "load_sample_csv",
    "load_science_csv", "resolve_weights",
    "EstimatorSpec", "build_design",
    "ClusterRCTError", "EnumerationCapError", "InsufficientDataError",
    "NumericalError", "RankDeficiencyError", "SchemaError",
    "REGISTRY", "EstimatorReport", "cluster_total_regression", "estimate",
    "estimate_named", "individual_regression",
    "weighted_average_ols_regression", "wls_average_regression",
    "EstimandSet", "ExactDistribution", "FRTResult", "RegularityReport",
    "TheoreticalSE", "exact_distribution", "fisher_randomization_test",
    "neyman_variance", "regularity_diagnostics", "theoretical_se",
    "true_estimands",
    "DEFAULT_ESTIMATORS", "SCENARIO_IDS", "MetricsRow", "Scenario",
    "make_scenario", "run_monte_carlo",
    "FitResult", "cr_sandwich", "hw_sandwich", "wls_fit",
]
