"""Optimal weights for very many alphas in O(M^2 N) via normalized cross-sectional regression."""

from .errors import (
    AlphaCombError,
    DegenerateError,
    DenseCapError,
    NotPositiveDefiniteError,
    ParseError,
    SingularDesignError,
    ValidationError,
)
from .optimizer import CombineOptions, benchmark_weights, combine, dense_oracle_weights, one_factor_weights
from .panel import ExpectedReturns, PositionHistory, ReturnsPanel, SynthSpec, WeightVector, gen_synthetic
from .regress import exact_factor_weights, regression_limit_weights, weighted_residuals
from .riskmodel import FactorModel

__version__ = "0.1.0"

__all__ = [
    "AlphaCombError",
    "CombineOptions",
    "DegenerateError",
    "DenseCapError",
    "ExpectedReturns",
    "FactorModel",
    "NotPositiveDefiniteError",
    "ParseError",
    "PositionHistory",
    "ReturnsPanel",
    "SingularDesignError",
    "SynthSpec",
    "ValidationError",
    "WeightVector",
    "benchmark_weights",
    "combine",
    "dense_oracle_weights",
    "exact_factor_weights",
    "gen_synthetic",
    "one_factor_weights",
    "regression_limit_weights",
    "weighted_residuals",
]
