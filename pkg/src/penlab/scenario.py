"""Synthetic heteroscedastic regression scenarios on [0, 1).

A scenario bundles a regression function ``s``, a noise level ``sigma``, a
two-level design density (mass ``mu`` on [0, 1/2]) and a sample size.  Exact
integrals of ``s``, ``s**2`` and ``sigma**2`` against the design density are
computed by composite Gauss-Legendre quadrature, split at every declared
breakpoint so that each panel integrates an analytic function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache
from typing import Callable, Sequence

import numpy as np

ArrayFn = Callable[[np.ndarray], np.ndarray]

GL_NODES = 32
MAX_PANEL_WIDTH = 1.0 / 64.0
_GL_X, _GL_W = np.polynomial.legendre.leggauss(GL_NODES)


class ScenarioError(ValueError):
    """Raised for unknown experiments or invalid scenario parameters."""


def _const(c: float) -> ArrayFn:
    c = float(c)
    return lambda x: np.full(np.shape(x), c, dtype=float)


@dataclass(frozen=True, eq=False)
class Piecewise:
    """A function on [0, 1] given by smooth pieces between breakpoints.

    ``breaks`` are the interior breakpoints.  A point equal to a breakpoint
    belongs to the piece on its left, so a two-piece function split at 1/2
    follows the ``x <= 1/2`` / ``x > 1/2`` convention.
    """

    breaks: tuple[float, ...]
    pieces: tuple[ArrayFn, ...]
    derivs: tuple[ArrayFn | None, ...] | None = None
    label: str = ""

    def __post_init__(self):
        if len(self.pieces) != len(self.breaks) + 1:
            raise ScenarioError("need exactly one more piece than breakpoints")
        if any(b <= a for a, b in zip(self.breaks, self.breaks[1:])):
            raise ScenarioError("breakpoints must be strictly increasing")
        if any(not 0.0 < b < 1.0 for b in self.breaks):
            raise ScenarioError("breakpoints must lie in (0, 1)")

    def piece_at(self, x: float) -> int:
        return int(np.searchsorted(self.breaks, x, side="left"))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if not self.breaks:
            return np.asarray(self.pieces[0](x), dtype=float)
        which = np.searchsorted(self.breaks, x, side="left")
        out = np.empty(x.shape, dtype=float)
        for k, fn in enumerate(self.pieces):
            mask = which == k
            if np.any(mask):
                out[mask] = fn(x[mask])
        return out

    def derivative(self, x):
        if self.derivs is None or any(d is None for d in self.derivs):
            raise ScenarioError(f"no derivative declared for {self.label or 'function'}")
        return Piecewise(self.breaks, self.derivs)(x)

    @classmethod
    def constant(cls, c: float) -> "Piecewise":
        return cls((), (_const(c),), (_const(0.0),), label=f"{c:g}")

    @classmethod
    def steps(cls, breaks: Sequence[float], levels: Sequence[float]) -> "Piecewise":
        pieces = tuple(_const(v) for v in levels)
        derivs = tuple(_const(0.0) for _ in levels)
        label = "steps(" + ",".join(f"{v:g}" for v in levels) + ")"
        return cls(tuple(float(b) for b in breaks), pieces, derivs, label)


def linear() -> Piecewise:
    return Piecewise((), (lambda x: np.asarray(x, dtype=float),), (_const(1.0),), "x")


def half_sine() -> Piecewise:
    return Piecewise(
        (),
        (lambda x: np.sin(np.pi * x),),
        (lambda x: np.pi * np.cos(np.pi * x),),
        "sin(pi x)",
    )


def linear_then_sine() -> Piecewise:
    """x/4 on [0, 1/2], then 1/8 + (2/3) sin(16 pi x)."""
    return Piecewise(
        (0.5,),
        (lambda x: x / 4.0, lambda x: 1.0 / 8.0 + 2.0 / 3.0 * np.sin(16.0 * np.pi * x)),
        (_const(0.25), lambda x: 32.0 * np.pi / 3.0 * np.cos(16.0 * np.pi * x)),
        "x/4 | 1/8+2/3 sin(16 pi x)",
    )


SHAPES: dict[str, Callable[[], Piecewise]] = {
    "linear": linear,
    "half-sine": half_sine,
    "piecewise-linear-sine": linear_then_sine,
    # same function, drawn in the homoscedastic illustration
    "quarter-linear": linear_then_sine,
}


@dataclass(frozen=True)
class IntervalMoments:
    """Integrals over [a, b) against the design density.

    ``m0`` is the design mass, ``m1`` and ``m2`` integrate ``s`` and ``s**2``,
    ``v2`` integrates ``sigma**2``.
    """

    m0: float
    m1: float
    m2: float
    v2: float

    def __add__(self, other: "IntervalMoments") -> "IntervalMoments":
        return IntervalMoments(
            self.m0 + other.m0, self.m1 + other.m1, self.m2 + other.m2, self.v2 + other.v2
        )


@dataclass(frozen=True, eq=False)
class RegressionScenario:
    name: str
    s: Piecewise
    sigma: Piecewise
    mu: float = 0.5
    n: int = 200
    noise: str = "gaussian"
    noise_bound: float = 3.0
    sigma_max: float | None = None
    maxdim_rule: str = "log"

    def __post_init__(self):
        if not 0.0 < self.mu < 1.0:
            raise ScenarioError(f"design mass mu must lie in (0, 1), got {self.mu}")
        if self.n < 1:
            raise ScenarioError(f"sample size must be positive, got {self.n}")
        if self.noise not in ("gaussian", "truncated-gaussian"):
            raise ScenarioError(f"unknown noise law {self.noise!r}")
        if self.noise == "truncated-gaussian" and self.noise_bound <= 0:
            raise ScenarioError("truncation bound must be positive")
        grid = np.linspace(0.0, 1.0, 4097)
        if np.any(self.sigma(grid) < 0):
            raise ScenarioError("noise level must be nonnegative")

    def with_n(self, n: int) -> "RegressionScenario":
        return replace(self, n=int(n))

    @cached_property
    def breakpoints(self) -> tuple[float, ...]:
        pts = {0.0, 0.5, 1.0, *self.s.breaks, *self.sigma.breaks}
        return tuple(sorted(pts))

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x <= 0.5, 2.0 * self.mu, 2.0 * (1.0 - self.mu))

    @cached_property
    def sigma_sup(self) -> float:
        """``||sigma||_inf`` on [0, 1]; exact for piecewise-constant noise."""
        if self.sigma_max is not None:
            return float(self.sigma_max)
        edges = self.breakpoints
        best = 0.0
        for a, b in zip(edges[:-1], edges[1:]):
            t = np.linspace(a, b, 1025)[1:-1]
            best = max(best, float(np.max(np.abs(self.sigma(t)))))
        return best

    @cached_property
    def noise_variance(self) -> float:
        """E[sigma(X)^2]."""
        return interval_moments(self, 0.0, 1.0).v2

    def interval_moments(self, a: float, b: float) -> IntervalMoments:
        return interval_moments(self, a, b)


def interval_moments(scenario: RegressionScenario, a: float, b: float) -> IntervalMoments:
    """Exact moments of the design restricted to [a, b)."""
    a = float(a)
    b = float(b)
    if not 0.0 <= a < b <= 1.0:
        raise ScenarioError(f"degenerate or out-of-range interval [{a}, {b})")
    return _moments_cached(scenario, a, b)


@lru_cache(maxsize=65536)
def _moments_cached(scenario: RegressionScenario, a: float, b: float) -> IntervalMoments:
    cuts = [a] + [t for t in scenario.breakpoints if a < t < b] + [b]
    m0 = m1 = m2 = v2 = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (lo + hi)
        dens = 2.0 * scenario.mu if mid <= 0.5 else 2.0 * (1.0 - scenario.mu)
        s_fn = scenario.s.pieces[scenario.s.piece_at(mid)]
        sig_fn = scenario.sigma.pieces[scenario.sigma.piece_at(mid)]
        panels = max(1, math.ceil((hi - lo) / MAX_PANEL_WIDTH - 1e-9))
        edges = np.linspace(lo, hi, panels + 1)
        half = 0.5 * np.diff(edges)
        centre = 0.5 * (edges[:-1] + edges[1:])
        x = (centre[:, None] + half[:, None] * _GL_X[None, :]).ravel()
        w = (half[:, None] * _GL_W[None, :]).ravel() * dens
        sv = np.asarray(s_fn(x), dtype=float)
        gv = np.asarray(sig_fn(x), dtype=float)
        m0 += dens * (hi - lo)
        m1 += float(np.dot(w, sv))
        m2 += float(np.dot(w, sv * sv))
        v2 += float(np.dot(w, gv * gv))
    return IntervalMoments(m0, m1, m2, v2)


def bin_moments(scenario: RegressionScenario, breakpoints: Sequence[float]):
    """Moment arrays ``(m0, m1, m2, v2)`` for consecutive bins."""
    bp = np.asarray(breakpoints, dtype=float)
    rows = [interval_moments(scenario, lo, hi) for lo, hi in zip(bp[:-1], bp[1:])]
    return (
        np.array([r.m0 for r in rows]),
        np.array([r.m1 for r in rows]),
        np.array([r.m2 for r in rows]),
        np.array([r.v2 for r in rows]),
    )


# ----------------------------------------------------------------------------
# The four experiments
# ----------------------------------------------------------------------------

def _x1_005(name="X1-005", mu=0.5, n=200, rule="log"):
    return RegressionScenario(
        name, linear(), Piecewise.steps([0.5], [1.0, 0.05]), mu=mu, n=n, maxdim_rule=rule
    )


EXPERIMENTS: dict[str, Callable[[], RegressionScenario]] = {
    "X1-005": _x1_005,
    "S0-1": lambda: RegressionScenario(
        "S0-1", half_sine(), Piecewise.steps([0.5], [0.0, 1.0]), mu=0.5, n=200
    ),
    "XS1-05": lambda: RegressionScenario(
        "XS1-05", linear_then_sine(), Piecewise.steps([0.5], [1.0, 0.5]), mu=0.5, n=500
    ),
    "X1-005mu02": lambda: _x1_005("X1-005mu02", mu=0.2, n=1000, rule="log2"),
}


def make_scenario(name: str, **overrides) -> RegressionScenario:
    """Build one of the named experiments, optionally overriding fields."""
    key = name.strip()
    if key not in EXPERIMENTS:
        raise ScenarioError(f"unknown experiment {name!r}; expected one of {sorted(EXPERIMENTS)}")
    scenario = EXPERIMENTS[key]()
    return replace(scenario, **overrides) if overrides else scenario


def two_level_scenario(
    s: str | Piecewise = "linear",
    sigma_a: float = 1.0,
    sigma_b: float = 0.05,
    mu: float = 0.5,
    n: int = 200,
    name: str | None = None,
    **kwargs,
) -> RegressionScenario:
    """Scenario with noise ``sigma_a`` on [0, 1/2] and ``sigma_b`` on (1/2, 1]."""
    fn = SHAPES[s]() if isinstance(s, str) else s
    label = name or f"custom(mu={mu:g},sa={sigma_a:g},sb={sigma_b:g})"
    return RegressionScenario(
        label, fn, Piecewise.steps([0.5], [sigma_a, sigma_b]), mu=mu, n=n, **kwargs
    )


# ----------------------------------------------------------------------------
# Sampling
# ----------------------------------------------------------------------------

def make_rng(seed) -> np.random.Generator:
    """Counter-based generator keyed by an int or a tuple of ints.

    ``make_rng((base, r))`` gives replication ``r`` its own stream, so a run
    does not depend on the order replications are executed in.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


@dataclass(frozen=True, eq=False)
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float)
        if x.shape != y.shape or x.ndim != 1:
            raise ValueError("x and y must be 1-d arrays of equal length")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return int(self.x.size)

    def __len__(self) -> int:
        return self.n

    @cached_property
    def sort_order(self) -> np.ndarray:
        """Permutation tau with x[tau] nondecreasing."""
        return np.argsort(self.x, kind="stable")

    @property
    def points(self):
        return list(zip(self.x.tolist(), self.y.tolist()))

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        if idx.size == 0:
            idx = idx.astype(np.intp)
        return Dataset(self.x[idx], self.y[idx])

    @classmethod
    def from_points(cls, pts) -> "Dataset":
        arr = np.asarray(pts, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])


def sample_design(scenario: RegressionScenario, u: np.ndarray) -> np.ndarray:
    """Inverse CDF of the two-level design density."""
    mu = scenario.mu
    x = np.where(u < mu, u / (2.0 * mu), 0.5 + (u - mu) / (2.0 * (1.0 - mu)))
    return np.minimum(x, np.nextafter(1.0, 0.0))


def sample_noise(scenario: RegressionScenario, rng: np.random.Generator, n: int) -> np.ndarray:
    if scenario.noise == "gaussian":
        return rng.standard_normal(n)
    from scipy.stats import truncnorm

    c = scenario.noise_bound
    law = truncnorm(-c, c)
    return law.rvs(size=n, random_state=rng) / law.std()


def sample(scenario: RegressionScenario, seed, n: int | None = None) -> Dataset:
    """Draw an i.i.d. sample ``Y = s(X) + sigma(X) eps``; pure given the seed."""
    rng = make_rng(seed)
    n = scenario.n if n is None else int(n)
    x = sample_design(scenario, rng.random(n))
    eps = sample_noise(scenario, rng, n)
    y = scenario.s(x) + scenario.sigma(x) * eps
    return Dataset(x, y)


def design_cdf(scenario: RegressionScenario, x):
    x = np.clip(np.asarray(x, dtype=float), 0.0, 1.0)
    mu = scenario.mu
    return np.where(x <= 0.5, 2.0 * mu * x, mu + 2.0 * (1.0 - mu) * (x - 0.5))
