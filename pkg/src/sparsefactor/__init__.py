"""Sparse factor analysis by nonconvex penalized likelihood.

EM with coordinate descent over lasso, SCAD and MC+ penalties, a pathwise
driver over ``(rho, gamma)``, information-criterion selection, a rotation
baseline and a Monte Carlo harness.
"""

__version__ = "0.1.0"

from .errors import (
    AscentViolationError,
    CalibrationError,
    InsufficientDataError,
    InvalidDataError,
    NumericalError,
    ParameterError,
    SingularModelError,
    SparseFactorError,
)
from .model import (
    FactorModel,
    PenalizedObjectiveValue,
    SampleMoments,
    log_likelihood,
    loading_gradient,
    penalized_objective,
    posterior_scores,
    sample_covariance,
)
from .penalty import PenaltySpec, penalty_value, reparameterize_rho, threshold
from .solver import FitResult, SolverOptions, e_step, fit, m_step
from .selection import CriterionSet, criteria, degrees_of_freedom, select
from .path import PathGrid, PathResult, build_grid, fit_path, init_loadings, select_rho_max
from .rotation import RotationResult, ml_fit, rotate, two_step
from .simulation import StudyConfig, StudyMetrics, align, generate, metrics, run_study

__all__ = [
    "AscentViolationError", "CalibrationError", "InsufficientDataError", "InvalidDataError",
    "NumericalError", "ParameterError", "SingularModelError", "SparseFactorError",
    "FactorModel", "PenalizedObjectiveValue", "SampleMoments", "log_likelihood",
    "loading_gradient", "penalized_objective", "posterior_scores", "sample_covariance",
    "PenaltySpec", "penalty_value", "reparameterize_rho", "threshold",
    "FitResult", "SolverOptions", "e_step", "fit", "m_step",
    "CriterionSet", "criteria", "degrees_of_freedom", "select",
    "PathGrid", "PathResult", "build_grid", "fit_path", "init_loadings", "select_rho_max",
    "RotationResult", "ml_fit", "rotate", "two_step",
    "StudyConfig", "StudyMetrics", "align", "generate", "metrics", "run_study",
]
