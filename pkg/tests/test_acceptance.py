"""End-to-end acceptance checks.

Each test prints one ``PASS`` / ``FAIL`` line; run with ``-s`` to see them.
Seeds are fixed up front.
"""

import math
import time

import numpy as np
import pytest

from penlab.harness.config import config_from_dict
from penlab.harness.oracle_check import delta_brute_force
from penlab.harness.report import compute_cor, cor_report, write_records
from penlab.harness.runner import run_experiment
from penlab.harness.engine import ReplicationEngine
from penlab.models import CollectionSpec, ModelIndex, enumerate_models
from penlab.penalties import (
    FoldAssignment,
    delta_np,
    expected_ideal_penalty,
    make_vfold_assignment,
    pen_loo,
    pen_vfold,
)
from penlab.regressogram import projection_bias
from penlab.scenario import make_scenario, sample, two_level_scenario
from penlab.selection import (
    CriterionTable,
    argmin_tiebreak,
    best_per_dimension,
    select_penalized,
    tiebreak_keys,
)
from penlab.theory import decompose, expected_p1, expected_p2, expected_vfold_penalty

ACCEPTANCE_SEED = 12345


def verdict(label: str, ok: bool, detail: str) -> None:
    print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    assert ok, detail


def z_score(values, target) -> float:
    v = np.asarray(values, dtype=float)
    return (v.mean() - target) / (v.std(ddof=1) / math.sqrt(v.size))


def test_expected_components_match_monte_carlo():
    t0 = time.perf_counter()
    reps = 10_000
    models = [ModelIndex.two_regime(*dd) for dd in ((2, 2), (4, 4), (9, 9), (2, 16))]
    worst = 0.0
    lines = []
    for name in ("X1-005", "S0-1"):
        sc = make_scenario(name)
        p1 = np.empty((reps, len(models)))
        p2 = np.empty_like(p1)
        for r in range(reps):
            data = sample(sc, (ACCEPTANCE_SEED, 1, r))
            for k, m in enumerate(models):
                rec = decompose(data, sc, m)
                p1[r, k], p2[r, k] = rec.p1, rec.p2
        for k, m in enumerate(models):
            z1 = z_score(p1[:, k], expected_p1(sc, m))
            z2 = z_score(p2[:, k], expected_p2(sc, m))
            worst = max(worst, abs(z1), abs(z2))
            lines.append(f"{name} {m.label()} z1={z1:+.2f} z2={z2:+.2f}")
    wall = time.perf_counter() - t0
    print("\n" + "\n".join(lines))
    verdict("E[p1], E[p2] vs 1e4 replications", worst <= 3.0 and wall < 120,
            f"max |z| = {worst:.2f} (<= 3), {wall:.0f}s (< 120s)")


def test_binomial_correction_oracle():
    worst = max(abs(delta_np(n, p) - delta_brute_force(n, p))
                for n in range(1, 13) for p in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9))
    exact = all(delta_np(n, 1.0) == 0.0 for n in range(1, 200))
    verdict("binomial correction vs enumeration", worst <= 1e-12 and exact,
            f"max |err| = {worst:.1e} (<= 1e-12), delta(n, 1) == 0: {exact}")


def test_bias_oracle():
    sc = two_level_scenario("linear", 1.0, 1.0, mu=0.5)
    errs = {d: abs(projection_bias(sc, ModelIndex.two_regime(d, d)) - 1 / (48 * d * d))
            for d in (1, 2, 4, 8, 16)}
    worst = max(errs.values())
    verdict("approximation error of (D,D) for s(x) = x", worst <= 1e-10, f"max |err| = {worst:.1e} (<= 1e-10)")


@pytest.fixture(scope="module")
def resampling_draws():
    t0 = time.perf_counter()
    sc = make_scenario("X1-005")
    m = ModelIndex.two_regime(4, 4)
    reps = 10_000
    n = sc.n
    # a fixed partition of the indices; the sample is i.i.d., so it is independent of the data
    fixed = {V: FoldAssignment(V, np.arange(n) % V) for V in (2, 5, 10)}
    vals = {key: np.empty(reps) for key in ("V=2", "V=5", "V=10", "loo")}
    strat = {V: np.empty(reps) for V in (5, 10)}
    for r in range(reps):
        data = sample(sc, (ACCEPTANCE_SEED, 4, r))
        for V, folds in fixed.items():
            vals[f"V={V}"][r] = pen_vfold(data, m, folds)
        vals["loo"][r] = pen_loo(data, m)
        for V in strat:
            strat[V][r] = pen_vfold(data, m, make_vfold_assignment(data, V, (ACCEPTANCE_SEED, 5, r, V)))
    wall = time.perf_counter() - t0
    target = expected_ideal_penalty(sc, m)
    info = ", ".join(f"V={V}: {np.mean(v) / target - 1:+.2%} (z={z_score(v, target):+.1f})"
                     for V, v in strat.items())
    print(f"\n[INFO] x-sorted stratified folds, relative bias {info}; {wall:.0f}s")
    return sc, m, vals, wall


FOLD_COUNT = {"V=2": 2, "V=5": 5, "V=10": 10, "loo": 200}


@pytest.mark.parametrize("key", ["V=2", "V=5", "V=10", "loo"])
def test_resampling_penalty_tracks_expected_ideal_penalty(resampling_draws, key):
    sc, m, vals, wall = resampling_draws
    target = expected_ideal_penalty(sc, m)
    z = z_score(vals[key], target)
    verdict(f"{key} penalty vs E[penid] for (4,4)", abs(z) <= 3.0 and wall < 600,
            f"mean {np.mean(vals[key]):.6f}, E[penid] = {target:.6f}, z = {z:+.2f} (|z| <= 3)")


@pytest.mark.parametrize("key", ["V=2", "V=5", "V=10", "loo"])
def test_resampling_penalty_matches_its_exact_expectation(resampling_draws, key):
    sc, m, vals, _ = resampling_draws
    target = expected_vfold_penalty(sc, m, FOLD_COUNT[key])
    z = z_score(vals[key], target)
    print(f"\n[INFO] {key}: exact expectation {target:.6f}, "
          f"{target / expected_ideal_penalty(sc, m) - 1:+.2%} from E[penid], z = {z:+.2f}")
    assert abs(z) <= 3.0


@pytest.fixture(scope="module")
def x1_run():
    cfg = config_from_dict({"experiment": "X1-005", "replications": 1000, "seed": ACCEPTANCE_SEED,
                            "procedures": ["all"]})
    t0 = time.perf_counter()
    run = run_experiment(cfg)
    wall = time.perf_counter() - t0
    table = {e.procedure: e for e in cor_report(run.records, run.procedures)}
    print(f"\n[INFO] X1-005, N=1000: {wall:.0f}s")
    return table, wall


@pytest.mark.parametrize("token,target,tol", [("IdLin", 2.065, 0.15), ("IdDim", 1.507, 0.12),
                                               ("IdPen-L", 1.378, 0.12)])
def test_ideal_procedures_accuracy(x1_run, token, target, tol):
    table, wall = x1_run
    e = table[token]
    verdict(f"C_or({e.display}) at N=1000", abs(e.c_or - target) <= tol and wall < 900,
            f"{e.c_or:.3f} +- {e.epsilon:.3f}, expected {target} +- {tol}")


def test_resampling_vs_mallows_spot_values(x1_run):
    table, _ = x1_run
    loo2, mal2 = table["L2"], table["C2"]
    best_mal = min((e for tok, e in table.items() if tok.startswith("C")), key=lambda e: e.c_or)
    ok = (abs(loo2.c_or - 1.870) <= 0.10 and abs(mal2.c_or - 2.862) <= 0.15
          and loo2.c_or < best_mal.c_or)
    verdict("penLoox2 and MalMaxx2 at N=1000", ok,
            f"penLoox2 = {loo2.c_or:.3f} (1.870 +- 0.10), MalMaxx2 = {mal2.c_or:.3f} (2.862 +- 0.15), "
            f"best MalMax = {best_mal.display} {best_mal.c_or:.3f}")


def test_dimension_based_selection_is_suboptimal(x1_run):
    table, _ = x1_run
    gap = table["IdDim"].c_or - table["IdPen-L"].c_or
    verdict("C_or(IdDim) - C_or(IdPenLoo)", gap > 0.05, f"{gap:.3f} (> 0.05)")


def test_mallows_overfits_under_heteroscedastic_design():
    sc = two_level_scenario("linear", 1.0, math.sqrt(0.1), mu=0.2, n=1000, name="cp-overfit")
    n = sc.n
    models = enumerate_models(CollectionSpec("reg-half", "log"), n)
    engine = ReplicationEngine(sc, models)
    keys = tiebreak_keys(models)
    pen = 2.0 * sc.noise_variance * engine.dims / n
    d1 = np.array([m.d1 for m in models])
    out = {"all": ([], [], []), "admissible": ([], [], [])}
    for r in range(200):
        data = sample(sc, (ACCEPTANCE_SEED, 8, r))
        v = engine.evaluate(data, {}, None)
        for label, idx in (("all", np.arange(len(models))), ("admissible", np.flatnonzero(v.admissible))):
            sub = tuple(k[idx] for k in keys)
            j, _ = argmin_tiebreak(v.emp_risk[idx] + pen[idx], *sub)
            o, _ = argmin_tiebreak(v.loss[idx], *sub)
            out[label][0].append(d1[idx[j]])
            out[label][1].append(v.loss[idx[j]])
            out[label][2].append(v.loss[idx[o]])
    threshold = n / (4 * math.log(n))

    def summary(label):
        sel_d1, sel_loss, orc_loss = (np.array(a) for a in out[label])
        return float(np.median(sel_d1)), float(np.median(sel_loss) / np.median(orc_loss))

    md1_f, ratio_f = summary("admissible")
    print(f"\n[INFO] restricted to models with >= 2 points per bin: median D1 = {md1_f:g}, "
          f"loss ratio = {ratio_f:.1f}")
    md1, ratio = summary("all")
    verdict("Cp with the mean noise level overfits the noisy half", md1 > threshold and ratio > 10,
            f"median D1 = {md1:g} (> {threshold:.2f}), median loss / median oracle loss = {ratio:.1f} (> 10)")


def test_dimension_penalties_stay_in_per_dimension_minimizers():
    sc = make_scenario("X1-005")
    models = enumerate_models(CollectionSpec("reg-half", "log"), sc.n)
    max_dim = max(m.dim for m in models)
    rng = np.random.default_rng(ACCEPTANCE_SEED)
    misses = 0
    for r in range(200):
        table = CriterionTable.build(sample(sc, (ACCEPTANCE_SEED, 9, r)), models)
        image = set(best_per_dimension(table).values())
        spread = float(np.ptp(table.emp_risk))
        for k in range(200):
            scale = spread * 10 ** rng.uniform(-3, 1)
            f = rng.standard_normal(max_dim + 1) * scale
            if k % 2:
                f = np.sort(f)
            misses += select_penalized(table.with_penalty([f[m.dim] for m in models])).model not in image
    verdict("dimension-only penalties pick per-dimension minimizers", misses == 0,
            f"{misses} misses over 200 datasets x 200 functions")


def test_records_identical_across_thread_counts(tmp_path):
    base = {"experiment": "X1-005", "replications": 40, "seed": ACCEPTANCE_SEED, "procedures": ["all"]}
    paths = []
    for threads in (1, 4):
        run = run_experiment(config_from_dict({**base, "threads": threads}))
        path = tmp_path / f"records_{threads}.csv"
        write_records(path, run.records, run.procedures, run.engine.models)
        paths.append(path)
    same = paths[0].read_bytes() == paths[1].read_bytes()
    verdict("records.csv with 1 and 4 threads", same, "byte-identical" if same else "differ")


def test_accuracy_index_helper_sanity():
    assert compute_cor([2.0, 2.0], [1.0, 1.0])[0] == 2.0
