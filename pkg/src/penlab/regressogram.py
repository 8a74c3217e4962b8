"""Least-squares regressograms: fitting, empirical risk and exact excess loss."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import ModelIndex, Partition, bin_index, build_partition
from .scenario import Dataset, RegressionScenario, bin_moments

FALLBACK = "fallback"
STRICT = "strict"


class EmptyBinError(ValueError):
    """A bin holds no training point and the policy is strict."""


@dataclass(frozen=True, eq=False)
class FittedHistogram:
    partition: Partition
    bin_mean: np.ndarray
    bin_count: np.ndarray
    bin_sum: np.ndarray
    bin_sumsq: np.ndarray
    fallback_mask: np.ndarray

    def predict(self, x) -> np.ndarray:
        return self.bin_mean[bin_index(self.partition, x)]

    @property
    def uses_fallback(self) -> bool:
        return bool(self.fallback_mask.any())


@dataclass(frozen=True)
class RiskReport:
    empirical_risk: float
    excess_loss: float
    bias: float

    CSV_HEADER = ("model", "D1", "D2", "emp_risk", "excess_loss", "bias")

    def csv_row(self, model: ModelIndex) -> tuple:
        return (model.label(), model.d1, model.d2,
                repr(self.empirical_risk), repr(self.excess_loss), repr(self.bias))


def _as_partition(p) -> Partition:
    return build_partition(p) if isinstance(p, ModelIndex) else p


def fit(data: Dataset, partition, empty_bin_policy: str = FALLBACK) -> FittedHistogram:
    """Per-bin means of the responses.

    Empty bins take the global mean of the training responses under the
    default ``"fallback"`` policy; ``"strict"`` raises :class:`EmptyBinError`.
    """
    partition = _as_partition(partition)
    if empty_bin_policy not in (FALLBACK, STRICT):
        raise ValueError(f"unknown empty-bin policy {empty_bin_policy!r}")
    if data.n < 1:
        raise ValueError("cannot fit an empty sample")
    d = partition.bin_count
    idx = bin_index(partition, data.x)
    counts = np.bincount(idx, minlength=d)
    sums = np.bincount(idx, weights=data.y, minlength=d)
    sumsq = np.bincount(idx, weights=data.y**2, minlength=d)
    empty = counts == 0
    if empty.any() and empty_bin_policy == STRICT:
        raise EmptyBinError(f"{int(empty.sum())} empty bin(s): {np.flatnonzero(empty).tolist()}")
    means = np.divide(sums, counts, out=np.full(d, float(np.mean(data.y))), where=~empty)
    return FittedHistogram(partition, means, counts, sums, sumsq, empty)


def empirical_risk(fitted: FittedHistogram, eval_data: Dataset) -> float:
    """Mean squared error of ``fitted`` on ``eval_data``."""
    if eval_data.n == 0:
        return 0.0
    resid = fitted.predict(eval_data.x) - eval_data.y
    return float(np.mean(resid * resid))


def excess_loss(fitted: FittedHistogram, scenario: RegressionScenario) -> float:
    """``E[(fitted(X) - s(X))^2]`` under the scenario's design."""
    m0, m1, m2, _ = bin_moments(scenario, fitted.partition.breakpoints)
    v = fitted.bin_mean
    return float(np.sum(m2 - 2.0 * v * m1 + v * v * m0))


def projection_means(scenario: RegressionScenario, partition) -> np.ndarray:
    """Per-bin values of the L2 projection ``s_m`` of ``s``."""
    partition = _as_partition(partition)
    m0, m1, _, _ = bin_moments(scenario, partition.breakpoints)
    return np.divide(m1, m0, out=np.zeros_like(m1), where=m0 > 0)


def projection_bias(scenario: RegressionScenario, partition) -> float:
    """Approximation error ``l(s, s_m)`` of the histogram model."""
    partition = _as_partition(partition)
    m0, m1, m2, _ = bin_moments(scenario, partition.breakpoints)
    pos = m0 > 0
    per_bin = np.where(pos, m2 - np.divide(m1 * m1, m0, out=np.zeros_like(m1), where=pos), m2)
    return float(np.sum(per_bin))


def risk_report(data: Dataset, partition, scenario: RegressionScenario) -> RiskReport:
    f = fit(data, partition)
    return RiskReport(empirical_risk(f, data), excess_loss(f, scenario),
                      projection_bias(scenario, f.partition))
