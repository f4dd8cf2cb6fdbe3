"""Probabilistic search on DAG state spaces with Gaussian value beliefs."""

__version__ = "0.1.0"

from .dag import Kind, SearchDag, Status
from .delta import DeltaConfig, DeltaTable, build_delta_table, delta_for_boundary_node
from .extremal import (
    NO_PRIOR,
    STANDARD_PRIOR,
    BivariatePair,
    ExtremalPrior,
    GaussianBelief,
    extremum_of_set,
    max_moments_pair,
    min_moments_pair,
)
from .posterior import GaussianPosterior, Kernel, posterior_marginal, standardize_from_pilot
from .values import BackupConfig, backup_ep, backup_softmax, boundary_value, summary_child
from .engine import ProbabilisticSearch, SearchConfig, recommend, rollout, run, select_child

__all__ = [
    "Kind",
    "SearchDag",
    "Status",
    "DeltaConfig",
    "DeltaTable",
    "build_delta_table",
    "delta_for_boundary_node",
    "NO_PRIOR",
    "STANDARD_PRIOR",
    "BivariatePair",
    "ExtremalPrior",
    "GaussianBelief",
    "extremum_of_set",
    "max_moments_pair",
    "min_moments_pair",
    "GaussianPosterior",
    "Kernel",
    "posterior_marginal",
    "standardize_from_pilot",
    "BackupConfig",
    "backup_ep",
    "backup_softmax",
    "boundary_value",
    "summary_child",
    "ProbabilisticSearch",
    "SearchConfig",
    "recommend",
    "rollout",
    "run",
    "select_child",
]
