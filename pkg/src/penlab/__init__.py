"""Penalized model selection among heteroscedastic regressograms.

Exact moments and sampling for piecewise scenarios, histogram models,
dimension-based and resampling penalties, selection rules, exact reference
quantities and a reproducible simulation harness.
"""

from .models import CollectionSpec, ModelIndex, Partition, build_partition, enumerate_models
from .penalties import (
    PenaltyKind,
    delta_np,
    expected_ideal_penalty,
    pen_holdout,
    pen_loo,
    pen_vfold,
)
from .regressogram import empirical_risk, excess_loss, fit, projection_bias
from .scenario import Dataset, RegressionScenario, make_scenario, sample
from .selection import (
    CriterionTable,
    best_per_dimension,
    penalty_path,
    select_holdout,
    select_penalized,
    select_vfcv,
)
from .theory import asymptotic_bias, decompose, expected_p1, expected_p2, expected_vfold_penalty

__version__ = "0.1.0"

__all__ = [
    "CollectionSpec", "ModelIndex", "Partition", "build_partition", "enumerate_models",
    "PenaltyKind", "delta_np", "expected_ideal_penalty", "pen_holdout", "pen_loo", "pen_vfold",
    "empirical_risk", "excess_loss", "fit", "projection_bias",
    "Dataset", "RegressionScenario", "make_scenario", "sample",
    "CriterionTable", "best_per_dimension", "penalty_path", "select_holdout",
    "select_penalized", "select_vfcv",
    "asymptotic_bias", "decompose", "expected_p1", "expected_p2", "expected_vfold_penalty",
]
