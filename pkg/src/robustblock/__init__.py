"""Minimax robust run orders for complete block experiments with correlated errors."""

from .analysis import (
    ExperimentData,
    EstimateResult,
    adjacency_diagnostic,
    check_theorem2,
    check_theorem4,
    efficiency,
    estimate,
    read_experiment_csv,
)
from .covariance import (
    CorrelationModel,
    Family,
    KKind,
    NeighbourhoodSpec,
    assemble_r0,
    correlation_matrix,
    worst_case_r,
)
from .design import (
    BlockLayout,
    Design,
    EnumerationTooLarge,
    ModelMatrices,
    build_model_matrices,
    enumerate_designs,
    neighbour_move,
)
from .estimators import BlockTreatmentRegressor, RobustBlockDesign
from .loss import (
    Criterion,
    Estimator,
    LossEvaluator,
    LossSpec,
    LossValue,
    SingularModel,
    cov_lse_under,
    cov_mglse_under,
    max_loss,
)
from .numerics import NotPositiveDefinite, direct_sum, is_positive_definite, log_det, pd_inverse
from .optimize import AnnealConfig, SearchResult, anneal, exhaustive_search

__version__ = "0.1.0"

__all__ = [
    "AnnealConfig", "BlockLayout", "BlockTreatmentRegressor", "CorrelationModel", "Criterion",
    "Design", "EnumerationTooLarge", "EstimateResult", "Estimator", "ExperimentData", "Family",
    "KKind", "LossEvaluator", "LossSpec", "LossValue", "ModelMatrices", "NeighbourhoodSpec",
    "NotPositiveDefinite", "RobustBlockDesign", "SearchResult", "SingularModel",
    "adjacency_diagnostic", "anneal", "assemble_r0", "build_model_matrices", "check_theorem2",
    "check_theorem4", "correlation_matrix", "cov_lse_under", "cov_mglse_under", "direct_sum",
    "efficiency", "enumerate_designs", "estimate", "exhaustive_search", "is_positive_definite",
    "log_det", "max_loss", "neighbour_move", "pd_inverse", "read_experiment_csv", "worst_case_r",
]
