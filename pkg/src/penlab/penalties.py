"""Penalties for histogram model selection.

Dimension-based penalties (linear, Mallows' Cp with an estimated or a known
noise level), the exact expectation of the ideal penalty, and resampling
penalties (V-fold, hold-out, leave-one-out) with stratified resampling schemes
built over the x-sorted sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .models import ModelIndex, Partition, bin_index, build_partition
from .regressogram import FALLBACK, empirical_risk, fit
from .scenario import Dataset, RegressionScenario, bin_moments, make_rng


def delta_np(n: int, p: float) -> float:
    """``n p E[1{Z>0}/Z] - 1`` for ``Z ~ Binomial(n, p)``.

    Summed exactly over the support, restricted to the window where the
    binomial weights are not negligible (40 standard deviations, which keeps
    every dropped weight far below 1e-18 of the total).
    """
    n = int(n)
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < p <= 1.0:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if p == 1.0:
        return 0.0
    mean = n * p
    sd = math.sqrt(n * p * (1.0 - p))
    lo = max(1, math.floor(mean - 40.0 * sd - 10.0))
    hi = min(n, math.ceil(mean + 40.0 * sd + 10.0))
    k = np.arange(lo, hi + 1, dtype=float)
    logw = (gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
            + k * math.log(p) + (n - k) * math.log1p(-p))
    w = np.exp(logw)
    return float(np.sum(w * (mean / k)) - 1.0)


def _noise_terms(scenario: RegressionScenario, partition: Partition):
    """Per-bin ``p_lambda`` and ``sigma_lambda^2 = (sigma^r)^2 + (sigma^d)^2``."""
    m0, m1, m2, v2 = bin_moments(scenario, partition.breakpoints)
    if np.any(m0 <= 0):
        raise ValueError("some bin has zero design mass")
    sig_r = v2 / m0
    sig_d = np.maximum(m2 - m1 * m1 / m0, 0.0) / m0
    return m0, sig_r + sig_d


def expected_ideal_penalty(scenario: RegressionScenario, partition, n: int | None = None) -> float:
    if isinstance(partition, ModelIndex):
        partition = build_partition(partition)
    n = scenario.n if n is None else int(n)
    p, sig2 = _noise_terms(scenario, partition)
    deltas = np.array([delta_np(n, float(q)) for q in p])
    return float(np.sum((2.0 + deltas) * sig2) / n)


def estimate_variance_diff(data: Dataset) -> float:
    """First-difference noise variance estimate on x-sorted responses.

    With odd ``n`` the last sorted point is dropped.
    """
    n = data.n
    if n < 2:
        raise ValueError("need at least two points")
    ys = data.y[data.sort_order]
    m = n // 2
    diff = ys[1 : 2 * m : 2] - ys[0 : 2 * m : 2]
    return float(np.sum(diff * diff) / (2 * m))


# ----------------------------------------------------------------------------
# Resampling schemes
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FoldAssignment:
    V: int
    fold_of: np.ndarray

    @property
    def n(self) -> int:
        return int(self.fold_of.size)

    def fold(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == j)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.fold_of, minlength=self.V)

    def relabel(self, perm) -> "FoldAssignment":
        return FoldAssignment(self.V, np.asarray(perm)[self.fold_of])


@dataclass(frozen=True, eq=False)
class HoldoutSplit:
    train: np.ndarray
    n: int

    @property
    def holdout(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        mask[self.train] = False
        return np.flatnonzero(mask)


def make_vfold_assignment(data: Dataset, V: int, seed) -> FoldAssignment:
    """Each consecutive x-sorted block of ``V`` points gets one point per fold."""
    n = data.n
    if not 2 <= V <= n:
        raise ValueError(f"V must lie in [2, {n}], got {V}")
    rng = make_rng(seed)
    order = data.sort_order
    nblocks, rem = divmod(n, V)
    labels = rng.permuted(np.tile(np.arange(V), (nblocks, 1)), axis=1).ravel()
    if rem:
        labels = np.concatenate([labels, rng.choice(V, size=rem, replace=False)])
    fold_of = np.empty(n, dtype=np.intp)
    fold_of[order] = labels
    return FoldAssignment(V, fold_of)


def make_holdout_split(data: Dataset, seed) -> HoldoutSplit:
    """One point of each consecutive x-sorted pair goes to the training set."""
    n = data.n
    if n < 2:
        raise ValueError("need at least two points")
    rng = make_rng(seed)
    order = data.sort_order
    m = n // 2
    pick = rng.integers(0, 2, size=m)
    train = order[2 * np.arange(m) + pick]
    if n % 2 and rng.random() < 0.5:
        train = np.append(train, order[-1])
    return HoldoutSplit(np.sort(train), n)


# ----------------------------------------------------------------------------
# Resampling penalties
# ----------------------------------------------------------------------------

def _partition(p) -> Partition:
    return build_partition(p) if isinstance(p, ModelIndex) else p


def pen_vfold(data: Dataset, partition, folds: FoldAssignment,
              empty_bin_policy: str = FALLBACK) -> float:
    partition = _partition(partition)
    if folds.n != data.n:
        raise ValueError("fold assignment built on another sample")
    total = 0.0
    for j in range(folds.V):
        train = folds.fold_of != j
        n_train = int(train.sum())
        if n_train == 0:
            continue
        f = fit(data.subset(train), partition, empty_bin_policy)
        total += empirical_risk(f, data) - empirical_risk(f, data.subset(train))
    return (folds.V - 1) / folds.V * total


def pen_holdout(data: Dataset, partition, split: HoldoutSplit,
                empty_bin_policy: str = FALLBACK) -> float:
    partition = _partition(partition)
    if split.n != data.n:
        raise ValueError("split built on another sample")
    n_i = split.train.size
    train = data.subset(split.train)
    f = fit(train, partition, empty_bin_policy)
    return n_i / (data.n - n_i) * (empirical_risk(f, data) - empirical_risk(f, train))


def loo_bin_terms(counts, rss, n: int):
    """Leave-one-out penalty contribution of bins with ``counts >= 2``.

    For a bin holding ``c`` points with residual sum of squares ``R``,
    dropping point ``j`` moves its bin mean by ``e_j / (c - 1)``; summing
    the resulting risk differences over the bin gives a closed form in
    ``(c, R)``.
    """
    c = np.asarray(counts, dtype=float)
    r = np.asarray(rss, dtype=float)
    ratio = c / (c - 1.0)
    a = 1.0 / n - 1.0 / (n - 1.0)
    # sum_j of A_j = n R_total - ratio R  splits as n R - ratio R per bin
    return (n - 1.0) / n * (a * (n * r - ratio * r) + ratio * ratio * r / n)


def pen_loo(data: Dataset, partition, empty_bin_policy: str = FALLBACK) -> float:
    """Leave-one-out penalty (V = n) from per-bin statistics, O(n + D)."""
    partition = _partition(partition)
    n = data.n
    if n < 2:
        raise ValueError("need at least two points")
    f = fit(data, partition, empty_bin_policy)
    idx = bin_index(partition, data.x)
    resid = data.y - f.bin_mean[idx]
    rss_bin = np.bincount(idx, weights=resid * resid, minlength=partition.bin_count)
    counts = f.bin_count
    multi = counts >= 2
    value = float(np.sum(loo_bin_terms(counts[multi], rss_bin[multi], n)))
    single = np.flatnonzero(counts[idx] == 1)
    if single.size:
        if empty_bin_policy != FALLBACK:
            from .regressogram import EmptyBinError

            raise EmptyBinError("leave-one-out empties a singleton bin")
        value += loo_singleton_terms(data.y, single, n)
    return value


def loo_singleton_terms(y: np.ndarray, single: np.ndarray, n: int) -> float:
    """Contribution of points alone in their bin; their refit uses the global mean.

    The part shared with every other point (``a * R_total``) is already carried
    by :func:`loo_bin_terms`, since singleton bins have zero residual.
    """
    t = float(np.sum(y))
    g = (t - y[single]) / (n - 1.0)
    err = (y[single] - g) ** 2
    return (n - 1.0) / n * float(np.sum(err)) / n


# ----------------------------------------------------------------------------
# Penalty kinds
# ----------------------------------------------------------------------------

TAGS = ("linear", "mal-est", "mal-max", "epenid", "vfold", "holdout", "loo")


@dataclass(frozen=True)
class PenaltyKind:
    tag: str
    K: float = 0.0
    V: int = 0
    c_ov: float = 1.0

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown penalty {self.tag!r}")
        if self.c_ov < 0:
            raise ValueError("overpenalization factor must be >= 0")
        if self.tag == "vfold" and self.V < 2:
            raise ValueError("V-fold penalty needs V >= 2")

    def scaled(self, c_ov: float) -> "PenaltyKind":
        return PenaltyKind(self.tag, self.K, self.V, c_ov)


@dataclass(frozen=True, eq=False)
class PenaltyContext:
    data: Dataset
    scenario: RegressionScenario | None = None
    folds: FoldAssignment | None = None
    split: HoldoutSplit | None = None


class MissingContextError(ValueError):
    pass


def penalty_value(kind: PenaltyKind, model: ModelIndex, context: PenaltyContext) -> float:
    data = context.data
    n = data.n
    dim = model.dim
    tag = kind.tag
    if tag == "linear":
        base = kind.K * dim / n
    elif tag == "mal-est":
        base = 2.0 * estimate_variance_diff(data) * dim / n
    elif tag in ("mal-max", "epenid"):
        if context.scenario is None:
            raise MissingContextError(f"{tag} needs the true scenario")
        if tag == "mal-max":
            base = 2.0 * context.scenario.sigma_sup ** 2 * dim / n
        else:
            base = expected_ideal_penalty(context.scenario, build_partition(model), n)
    elif tag == "vfold":
        if context.folds is None:
            raise MissingContextError("V-fold penalty needs a fold assignment")
        if context.folds.V != kind.V:
            raise MissingContextError(f"fold assignment has V={context.folds.V}, expected {kind.V}")
        base = pen_vfold(data, model, context.folds)
    elif tag == "holdout":
        if context.split is None:
            raise MissingContextError("hold-out penalty needs a split")
        base = pen_holdout(data, model, context.split)
    else:
        base = pen_loo(data, model)
    return kind.c_ov * base
