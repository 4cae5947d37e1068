"""Bivariate common-shock phase-type distributions."""

from .errors import (
    CSPHError,
    DimensionError,
    DomainError,
    FitError,
    InputError,
    NumericalError,
    SingularMatrixError,
    ValidationError,
)
from .inference import BivariateDataset, FitOptions, FitResult, ModelStructure, ReducedModel, fit, log_likelihood
from .master import MasterQuery, master_moment
from .model import CSPHModel, MPHModel, joint_cdf, joint_mgf, joint_pdf, marginal_cdf, marginal_pdf, validate
from .presets import example_one, exponential_model
from .risk import moment_set, pearson, risk_report, value_at_risk

__all__ = [
    "BivariateDataset",
    "CSPHError",
    "CSPHModel",
    "DimensionError",
    "DomainError",
    "FitError",
    "FitOptions",
    "FitResult",
    "InputError",
    "MPHModel",
    "MasterQuery",
    "ModelStructure",
    "NumericalError",
    "ReducedModel",
    "SingularMatrixError",
    "ValidationError",
    "example_one",
    "exponential_model",
    "fit",
    "joint_cdf",
    "joint_mgf",
    "joint_pdf",
    "log_likelihood",
    "marginal_cdf",
    "marginal_pdf",
    "master_moment",
    "moment_set",
    "pearson",
    "risk_report",
    "validate",
    "value_at_risk",
]
