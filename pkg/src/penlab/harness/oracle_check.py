"""Self-checks of the exact formulas against independent computations.

Each check is small enough to run in a few seconds; the full-size versions
live in the test suite.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..models import CollectionSpec, ModelIndex, enumerate_models
from ..penalties import (
    FoldAssignment,
    delta_np,
    expected_ideal_penalty,
    make_holdout_split,
    make_vfold_assignment,
    pen_holdout,
    pen_loo,
    pen_vfold,
)
from ..regressogram import empirical_risk, excess_loss, fit, projection_bias
from ..scenario import make_scenario, make_rng, sample
from ..selection import (
    CriterionTable,
    best_per_dimension,
    path_vertices,
    select_penalized,
)
from ..theory import asymptotic_bias, decompose, expected_p1, expected_p2
from .engine import ReplicationEngine


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float


def delta_brute_force(n: int, p: float) -> float:
    total = sum(math.comb(n, k) * p**k * (1 - p) ** (n - k) / k for k in range(1, n + 1))
    return n * p * total - 1.0


def check_delta() -> tuple[bool, str]:
    worst = max(abs(delta_np(n, p) - delta_brute_force(n, p))
                for n in range(1, 13) for p in np.round(np.arange(1, 10) / 10, 1))
    exact_one = all(delta_np(n, 1.0) == 0.0 for n in range(1, 50))
    return worst <= 1e-12 and exact_one, f"max |err| = {worst:.2e}, delta(n, 1) == 0: {exact_one}"


def check_delta_monotone() -> tuple[bool, str]:
    vals = [abs(delta_np(int(2 * m), 0.5)) for m in (1, 10, 100, 1000, 10000)]
    ok = all(a > b for a, b in zip(vals, vals[1:]))
    return ok, "|delta| at np = 1..1e4: " + ", ".join(f"{v:.2e}" for v in vals)


def check_bias() -> tuple[bool, str]:
    sc = make_scenario("X1-005")
    worst = max(abs(projection_bias(sc, ModelIndex.two_regime(d, d)) - 1.0 / (48 * d * d))
                for d in (1, 2, 4, 8, 16))
    pred = asymptotic_bias(sc, ModelIndex.two_regime(2, 2)).predicted
    worst = max(worst, abs(pred - 1.0 / 192.0))
    return worst <= 1e-10, f"max |err| = {worst:.2e}"


def check_identity() -> tuple[bool, str]:
    sc = make_scenario("S0-1")
    worst = 0.0
    for r in range(100):
        rec = decompose(sample(sc, (7, r)), sc, ModelIndex.two_regime(1 + r % 9, 1 + (3 * r) % 11))
        scale = max(abs(rec.penid), abs(rec.p1), abs(rec.p2), abs(rec.delta_bar), 1e-300)
        worst = max(worst, abs(rec.identity_residual()) / scale)
    return worst <= 1e-10, f"max relative residual = {worst:.2e}"


def check_expectations(reps: int = 2000) -> tuple[bool, str]:
    sc = make_scenario("X1-005")
    model = ModelIndex.two_regime(4, 4)
    recs = [decompose(sample(sc, (11, r)), sc, model) for r in range(reps)]
    out = []
    ok = True
    for label, vals, target in (("p1", [x.p1 for x in recs], expected_p1(sc, model)),
                                ("p2", [x.p2 for x in recs], expected_p2(sc, model))):
        v = np.array(vals)
        z = (v.mean() - target) / (v.std(ddof=1) / math.sqrt(reps))
        ok &= abs(z) <= 3.0
        out.append(f"{label}: z = {z:+.2f}")
    return ok, ", ".join(out)


def check_loo() -> tuple[bool, str]:
    sc = make_scenario("X1-005")
    worst = 0.0
    for r in range(20):
        d = sample(sc, (13, r), n=30)
        folds = FoldAssignment(d.n, np.arange(d.n))
        for m in (ModelIndex.two_regime(2, 2), ModelIndex.two_regime(5, 9), ModelIndex.regular(20)):
            worst = max(worst, abs(pen_loo(d, m) - pen_vfold(d, m, folds)))
    return worst <= 1e-10, f"closed form vs 30 refits: max |err| = {worst:.2e}"


def check_engine() -> tuple[bool, str]:
    from ..selection import holdout_criterion, vfcv_criterion

    sc = make_scenario("X1-005")
    n = 40
    models = enumerate_models(CollectionSpec("reg-half", 10), n)
    eng = ReplicationEngine(sc, models, n=n)
    worst = 0.0
    for r in range(3):
        d = sample(sc, (17, r), n=n)
        folds = {V: make_vfold_assignment(d, V, (18, r, V)) for V in (2, 5, 10)}
        split = make_holdout_split(d, (19, r))
        v = eng.evaluate(d, folds, split)
        for i, m in enumerate(models):
            f = fit(d, m)
            ref = [empirical_risk(f, d), excess_loss(f, sc), pen_loo(d, m), pen_holdout(d, m, split),
                   holdout_criterion(d, m, split), expected_ideal_penalty(sc, m, n)]
            got = [v.emp_risk[i], v.loss[i], v.pen_loo[i], v.pen_holdout[i], v.crit_holdout[i],
                   eng.epenid[i]]
            for V in (2, 5, 10):
                ref += [pen_vfold(d, m, folds[V]), vfcv_criterion(d, m, folds[V])]
                got += [v.pen_vfold[V][i], v.crit_vfold[V][i]]
            worst = max(worst, float(np.max(np.abs(np.subtract(ref, got)))))
    return worst <= 1e-10, f"segment sums vs per-model refits: max |err| = {worst:.2e}"


def check_path() -> tuple[bool, str]:
    rng = make_rng(23)
    bad = 0
    for _ in range(20):
        pen = rng.random(50)
        emp = rng.random(50)
        path = path_vertices(emp, pen)
        for K in np.linspace(0.0, 5.0, 2001):
            crit = emp + K * pen
            if path.select(K) != int(np.argmin(crit)):
                # exact ties between vertices only happen at breakpoints
                if not np.isclose(crit[path.select(K)], crit.min(), rtol=0, atol=1e-12):
                    bad += 1
    return bad == 0, f"{bad} grid disagreements over 20 random paths"


def check_dimension_penalties() -> tuple[bool, str]:
    sc = make_scenario("X1-005")
    models = enumerate_models(CollectionSpec("reg-half", "log"), sc.n)
    rng = make_rng(29)
    misses = 0
    for r in range(20):
        table = CriterionTable.build(sample(sc, (31, r)), models)
        image = set(best_per_dimension(table).values())
        for _ in range(20):
            f = rng.standard_normal(max(m.dim for m in models) + 1) * 0.05
            out = select_penalized(table.with_penalty([f[m.dim] for m in models]))
            misses += out.model not in image
    return misses == 0, f"{misses} selections outside the per-dimension minimizers (400 trials)"


CHECKS: list[tuple[str, Callable[[], tuple[bool, str]]]] = [
    ("binomial correction vs enumeration", check_delta),
    ("binomial correction shrinks with np", check_delta_monotone),
    ("approximation error, linear s", check_bias),
    ("ideal penalty decomposition identity", check_identity),
    ("E[p1], E[p2] vs Monte Carlo", check_expectations),
    ("leave-one-out closed form", check_loo),
    ("segment engine vs direct refits", check_engine),
    ("penalty path vs K grid", check_path),
    ("dimension penalties pick per-dimension minimizers", check_dimension_penalties),
]


def run_checks(checks=CHECKS) -> list[CheckResult]:
    out = []
    for name, fn in checks:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashing check is a failing check
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append(CheckResult(name, bool(ok), detail, time.perf_counter() - t0))
    return out


def format_results(results: list[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check':<{width}}  result  time   detail"]
    for r in results:
        lines.append(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL':<6}  {r.seconds:5.1f}s {r.detail}")
    return "\n".join(lines)
