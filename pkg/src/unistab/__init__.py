"""Uniform stability toolkit: bounds, range reduction, stable solvers and tail experiments."""
from .core import (
    CertificateViolation,
    DataDependentFunction,
    Dataset,
    FiniteDistribution,
    audit_stability,
    empirical_mean,
    estimation_error,
    loo_error,
    true_mean,
    unbias,
)
from .bounds import BoundParams, be02_bound, fv18_bound, main_bound, mcdiarmid_tail
from .kernels import BACKEND

__all__ = [
    "BACKEND",
    "BoundParams",
    "CertificateViolation",
    "DataDependentFunction",
    "Dataset",
    "FiniteDistribution",
    "audit_stability",
    "be02_bound",
    "empirical_mean",
    "estimation_error",
    "fv18_bound",
    "loo_error",
    "main_bound",
    "mcdiarmid_tail",
    "true_mean",
    "unbias",
]

__version__ = "0.1.0"
