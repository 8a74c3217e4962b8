"""Exact reference quantities used to check the estimators.

Expectations of the two halves of the ideal penalty, their realized values on
a sample (together with the centered bias term, so that an exact identity can
be checked), and the leading-order approximation error of two-regime models
under a uniform design.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import ModelIndex, build_partition, bin_index
from .penalties import _noise_terms, delta_np
from .regressogram import FALLBACK, empirical_risk, excess_loss, fit, projection_bias, projection_means
from .scenario import GL_NODES, Dataset, RegressionScenario, ScenarioError, bin_moments


def _partition(p):
    return build_partition(p) if isinstance(p, ModelIndex) else p


def expected_p2(scenario: RegressionScenario, partition, n: int | None = None) -> float:
    """``E[P_n gamma(s_m) - P_n gamma(s_hat_m)] = sum sigma_lambda^2 / n``."""
    partition = _partition(partition)
    n = scenario.n if n is None else int(n)
    _, sig2 = _noise_terms(scenario, partition)
    return float(np.sum(sig2) / n)


def expected_p1(scenario: RegressionScenario, partition, n: int | None = None) -> float:
    """``E[P gamma(s_hat_m) - P gamma(s_m)] = sum (1 + delta_{n,p}) sigma_lambda^2 / n``."""
    partition = _partition(partition)
    n = scenario.n if n is None else int(n)
    p, sig2 = _noise_terms(scenario, partition)
    deltas = np.array([delta_np(n, float(q)) for q in p])
    return float(np.sum((1.0 + deltas) * sig2) / n)


def expected_vfold_penalty(scenario: RegressionScenario, partition, V: int,
                           n: int | None = None) -> float:
    """Expectation of the V-fold penalty for folds that partition the indices independently of the data.

    Each training set holds ``n_T = n (V - 1) / V`` points, so a bin with mass
    ``p`` receives ``Binomial(n_T, p)`` of them, and the expectation is
    ``sum (2 + delta_{n_T, p} - (1 - p)^{n_T}) sigma_lambda^2 / n``.  The only
    term left out is the refit on a training set that leaves a bin empty,
    whose probability is ``(1 - p)^{n_T}``.  Needs ``V`` to divide ``n``.
    """
    partition = _partition(partition)
    n = scenario.n if n is None else int(n)
    if V < 2 or n % V:
        raise ValueError(f"V must be >= 2 and divide n = {n}, got {V}")
    n_train = n * (V - 1) // V
    p, sig2 = _noise_terms(scenario, partition)
    deltas = np.array([delta_np(n_train, float(q)) for q in p])
    return float(np.sum((2.0 + deltas - (1.0 - p) ** n_train) * sig2) / n)


@dataclass(frozen=True)
class DecompositionRecord:
    """Realized components of the ideal penalty on one sample.

    ``risk_s_sample`` and ``risk_s_true`` are ``P_n gamma(s)`` and
    ``P gamma(s) = E[sigma(X)^2]``; ``penid`` is computed directly, not from
    the other terms.
    """

    p1: float
    p2: float
    delta_bar: float
    penid: float
    risk_s_sample: float
    risk_s_true: float

    @property
    def centered_noise(self) -> float:
        return self.risk_s_sample - self.risk_s_true

    def identity_residual(self) -> float:
        """``penid - (p1 + p2 - delta_bar - (P_n - P) gamma(s))``; zero up to rounding."""
        return self.penid - (self.p1 + self.p2 - self.delta_bar - self.centered_noise)


def decompose(data: Dataset, scenario: RegressionScenario, partition,
              empty_bin_policy: str = FALLBACK) -> DecompositionRecord:
    partition = _partition(partition)
    fitted = fit(data, partition, empty_bin_policy)
    _, _, _, v2 = bin_moments(scenario, partition.breakpoints)
    noise_true = float(np.sum(v2))  # P gamma(s)
    loss = excess_loss(fitted, scenario)
    bias = projection_bias(scenario, partition)
    proj = projection_means(scenario, partition)[bin_index(partition, data.x)]
    s_at_x = scenario.s(data.x)
    emp_hat = empirical_risk(fitted, data)
    emp_proj = float(np.mean((data.y - proj) ** 2))
    emp_s = float(np.mean((data.y - s_at_x) ** 2))
    return DecompositionRecord(
        p1=loss - bias,
        p2=emp_proj - emp_hat,
        delta_bar=(emp_proj - emp_s) - bias,
        penid=(loss + noise_true) - emp_hat,
        risk_s_sample=emp_s,
        risk_s_true=noise_true,
    )


@dataclass(frozen=True)
class AsymptoticBias:
    alpha1: float
    alpha2: float
    d1: int
    d2: int

    @property
    def predicted(self) -> float:
        return self.alpha1 / self.d1**2 + self.alpha2 / self.d2**2


def _slope_energy(scenario: RegressionScenario, a: float, b: float) -> float:
    """``int_a^b s'(x)^2 dx`` by Gauss-Legendre on panels split at the breakpoints of s."""
    gx, gw = np.polynomial.legendre.leggauss(GL_NODES)
    cuts = [a] + [t for t in scenario.s.breaks if a < t < b] + [b]
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        edges = np.linspace(lo, hi, 65)
        half = 0.5 * np.diff(edges)
        centre = 0.5 * (edges[:-1] + edges[1:])
        x = (centre[:, None] + half[:, None] * gx[None, :]).ravel()
        w = (half[:, None] * gw[None, :]).ravel()
        mid = 0.5 * (lo + hi)
        deriv = scenario.s.derivs[scenario.s.piece_at(mid)] if scenario.s.derivs else None
        if deriv is None:
            raise ScenarioError("regression function has no declared derivative")
        total += float(np.dot(w, np.asarray(deriv(x), dtype=float) ** 2))
    return total


def asymptotic_bias(scenario: RegressionScenario, model: ModelIndex) -> AsymptoticBias:
    """Leading term ``alpha1 / D1^2 + alpha2 / D2^2`` of the approximation error.

    Only defined for a uniform design and a model split at 1/2.
    """
    if scenario.mu != 0.5:
        raise ScenarioError("the bias expansion assumes a uniform design (mu = 1/2)")
    if model.split != 0.5:
        raise ValueError("the bias expansion is stated for models split at 1/2")
    a1 = _slope_energy(scenario, 0.0, 0.5) / 48.0
    a2 = _slope_energy(scenario, 0.5, 1.0) / 48.0
    return AsymptoticBias(a1, a2, model.d1, model.d2)
