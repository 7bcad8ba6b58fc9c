"""Gaussian process surrogate modeling with sequential input selection."""

from .benchmark import BenchmarkProtocol, GSobolSpec, g_sobol, lhs, run_table1
from .covariance import (CorrelationParams, build_correlation_matrix,
                         correlation, cross_correlation_vector)
from .data import (InputRanking, TrainingSet, UniformTransform, apply_transform,
                   build_transforms, build_uniform_transform, load_csv,
                   rank_by_correlation)
from .errors import (DataError, FoldFitError, GpselError, IllConditionedError,
                     ModelFormatError, ParameterDomainError, PipelineError,
                     RankDeficiencyError, SampleTooSmallError)
from .estimation import PsiObjective, aicc, gls_fit, log_likelihood, psi_objective
from .pattern_search import SearchSpec, minimize
from .pipeline import (PipelineConfig, SelectionTrace, cross_validate, fit_full,
                       rerank_by_delta_q2, run_step3, select_optimal)
from .predictor import GpCore, GpModel, PredictionResult
from .regression import RegressionBasis, basis_matrix, basis_row
from .validation import FoldPlan, fold_plan, kfold_q2, q2

__version__ = "0.1.0"

__all__ = [
    "BenchmarkProtocol", "GSobolSpec", "g_sobol", "lhs", "run_table1",
    "CorrelationParams", "build_correlation_matrix", "correlation",
    "cross_correlation_vector",
    "InputRanking", "TrainingSet", "UniformTransform", "apply_transform",
    "build_transforms", "build_uniform_transform", "load_csv",
    "rank_by_correlation",
    "DataError", "FoldFitError", "GpselError", "IllConditionedError",
    "ModelFormatError", "ParameterDomainError", "PipelineError",
    "RankDeficiencyError", "SampleTooSmallError",
    "PsiObjective", "aicc", "gls_fit", "log_likelihood", "psi_objective",
    "SearchSpec", "minimize",
    "PipelineConfig", "SelectionTrace", "cross_validate", "fit_full",
    "rerank_by_delta_q2", "run_step3", "select_optimal",
    "GpCore", "GpModel", "PredictionResult",
    "RegressionBasis", "basis_matrix", "basis_row",
    "FoldPlan", "fold_plan", "kfold_q2", "q2",
]
