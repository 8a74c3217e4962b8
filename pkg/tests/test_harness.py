import json
import math
from pathlib import Path

import numpy as np
import pytest

from penlab.harness.cli import main
from penlab.harness.config import ConfigError, config_from_dict, load_config, parse_function, parse_sweep
from penlab.harness.engine import (
    Procedure,
    ReplicationEngine,
    ReplicationRecord,
    parse_procedures,
    replication_seeds,
    run_replication,
)
from penlab.harness.oracle_check import CHECKS, format_results, run_checks
from penlab.harness.report import (
    RECORD_HEADER,
    Heatmap,
    compute_cor,
    cor_from_rows,
    cor_report,
    emit_outputs,
    heatmap_from_rows,
    read_rows,
    render_table,
    selection_heatmap,
    total_variation,
)
from penlab.harness.runner import run_experiment
from penlab.models import CollectionSpec, ModelIndex, enumerate_models
from penlab.penalties import (
    expected_ideal_penalty,
    make_holdout_split,
    make_vfold_assignment,
    pen_holdout,
    pen_loo,
    pen_vfold,
)
from penlab.regressogram import empirical_risk, excess_loss, fit
from penlab.scenario import make_scenario, sample
from penlab.selection import (
    CriterionTable,
    admissible_models,
    holdout_criterion,
    select_holdout,
    select_penalized,
    select_vfcv,
    vfcv_criterion,
)

N_SMALL = 60


@pytest.fixture(scope="module")
def small_engine():
    sc = make_scenario("X1-005", n=N_SMALL)
    return ReplicationEngine(sc, enumerate_models(CollectionSpec("reg-half", 12), N_SMALL))


class TestProcedures:
    def test_all_roster(self):
        procs = parse_procedures(["all"])
        assert len(procs) == 52
        assert len({p.token for p in procs}) == 52

    @pytest.mark.parametrize("tokens,expected", [
        (["L2"], ["L2"]),
        (["C"], ["C1", "C1.25", "C2", "C3", "C4"]),
        (["D", "IdDim", "IdPen-L"], ["D", "IdDim", "IdPen-L"]),
        (["L2", "L2"], ["L2"]),
    ])
    def test_tokens(self, tokens, expected):
        assert [p.token for p in parse_procedures(tokens)] == expected

    @pytest.mark.parametrize("bad", ["D2", "Z", "IdPen-D", "L-1"])
    def test_bad_tokens(self, bad):
        with pytest.raises(ValueError):
            parse_procedures([bad])

    @pytest.mark.parametrize("token,display", [
        ("L2", "penLoox2"), ("L1", "penLoo"), ("C1.25", "MalMaxx1.25"), ("G", "10FCV"),
        ("IdPen-L", "IdPenLoo"), ("IdPen-A", "IdEpenid"), ("IdPen-I", "IdPen2F"), ("IdLin", "IdLin"),
    ])
    def test_display_names(self, token, display):
        assert parse_procedures([token])[0].display == display


class TestEngine:
    @pytest.mark.parametrize("r", range(3))
    def test_matches_direct_computation(self, small_engine, r):
        eng = small_engine
        sc = eng.scenario
        data = sample(sc, (9, r), n=N_SMALL - r)  # odd and even sizes
        eng_r = ReplicationEngine(sc, eng.models, n=data.n)
        folds = {V: make_vfold_assignment(data, V, (1, r, V)) for V in (2, 5, 10)}
        split = make_holdout_split(data, (2, r))
        v = eng_r.evaluate(data, folds, split)
        for i, m in enumerate(eng.models):
            f = fit(data, m)
            assert v.emp_risk[i] == pytest.approx(empirical_risk(f, data), abs=1e-12)
            assert v.loss[i] == pytest.approx(excess_loss(f, sc), abs=1e-12)
            assert v.pen_loo[i] == pytest.approx(pen_loo(data, m), abs=1e-12)
            assert v.pen_holdout[i] == pytest.approx(pen_holdout(data, m, split), abs=1e-12)
            assert v.crit_holdout[i] == pytest.approx(holdout_criterion(data, m, split), abs=1e-12)
            assert eng_r.epenid[i] == pytest.approx(expected_ideal_penalty(sc, m, data.n), rel=1e-12)
            for V in (2, 5, 10):
                assert v.pen_vfold[V][i] == pytest.approx(pen_vfold(data, m, folds[V]), abs=1e-12)
                assert v.crit_vfold[V][i] == pytest.approx(vfcv_criterion(data, m, folds[V]), abs=1e-12)

    def test_without_resampling(self, small_engine):
        data = sample(small_engine.scenario, 0)
        v = small_engine.evaluate(data, {}, None)
        assert np.all(np.isnan(v.pen_holdout)) and np.all(np.isfinite(v.emp_risk))

    def test_deterministic(self, small_engine):
        procs = parse_procedures(["all"])
        a = run_replication(small_engine, procs, 5, 3)
        b = run_replication(small_engine, procs, 5, 3)
        assert a == b

    @pytest.mark.parametrize("r", range(20))
    def test_dominance(self, small_engine, r):
        rec = run_replication(small_engine, parse_procedures(["all"]), 17, r)
        assert rec.check_oracle_dominance()
        L = rec.losses
        for letter in "HIJKLA":
            for c in ("1", "1.25", "2", "3", "4"):
                assert L[f"IdPen-{letter}"] <= L[f"{letter}{c}"]
        for tok in ("B1", "B2", "C1", "C4"):
            assert L["IdLin"] <= L[tok]
        assert L["IdDim"] <= L["IdLin"]

    @pytest.mark.parametrize("r", range(5))
    def test_shared_randomness(self, small_engine, r):
        base = 31
        rec = run_replication(small_engine, parse_procedures(["D", "H1", "F", "J1"]), base, r)
        seeds = replication_seeds(base, r)
        data = sample(small_engine.scenario, seeds["data"], n=N_SMALL)
        split = make_holdout_split(data, seeds["holdout"])
        folds5 = make_vfold_assignment(data, 5, seeds["vfold5"])
        adm = admissible_models(data, small_engine.models)
        expected = {
            "D": select_holdout(data, adm, split).model,
            "F": select_vfcv(data, adm, folds5).model,
            "H1": select_penalized(CriterionTable.build(
                data, adm, lambda m: pen_holdout(data, m, split))).model,
            "J1": select_penalized(CriterionTable.build(
                data, adm, lambda m: pen_vfold(data, m, folds5))).model,
        }
        for tok, model in expected.items():
            assert small_engine.models[rec.selected[tok]] == model


class TestAccuracyIndex:
    def test_ratio(self):
        c_or, eps = compute_cor([3.0, 3.0], [2.0, 2.0])
        assert c_or == 1.5 and eps == 0.0

    def test_identical(self):
        assert compute_cor([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])[0] == 1.0

    def test_zero_oracle(self):
        with pytest.raises(ValueError):
            compute_cor([1.0], [0.0])

    def test_single_replication(self):
        c_or, eps = compute_cor([2.0], [1.0])
        assert c_or == 2.0 and math.isnan(eps)

    def test_epsilon(self):
        sel = np.array([1.0, 2.0, 3.0, 4.0])
        assert compute_cor(sel, np.ones(4))[1] == pytest.approx(np.std(sel, ddof=1) / 2.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            compute_cor([1.0, 2.0], [1.0])


MODELS = [ModelIndex.constant(), ModelIndex.two_regime(1, 1), ModelIndex.two_regime(2, 3)]


def fake_record(r, oracle, chosen):
    return ReplicationRecord(r, oracle, 0.1, {"L2": chosen}, {"L2": 0.2}, {}, {})


class TestHeatmaps:
    def test_single_cell(self):
        hm = selection_heatmap([fake_record(0, 2, 2)], MODELS, "oracle")
        assert hm.log10freq() == {(2, 3): 0.0}

    def test_nine_to_one(self):
        recs = [fake_record(r, 1, 1) for r in range(9)] + [fake_record(9, 2, 1)]
        lf = selection_heatmap(recs, MODELS, "oracle").log10freq()
        assert lf[(1, 1)] == pytest.approx(math.log10(0.9))
        assert lf[(2, 3)] == pytest.approx(-1.0)

    def test_constant_cell(self):
        hm = selection_heatmap([fake_record(0, 0, 0)], MODELS, "L2")
        assert hm.counts == {(0, 0): 1}

    def test_unknown_procedure(self):
        with pytest.raises(KeyError):
            selection_heatmap([fake_record(0, 0, 0)], MODELS, "IdDim")

    def test_needs_two_regime_collection(self):
        with pytest.raises(ValueError):
            selection_heatmap([fake_record(0, 0, 0)], [ModelIndex.regular(2)], "oracle")

    def test_matrix(self):
        m = Heatmap("x", {(1, 2): 5, (0, 0): 5}, 10).matrix(3)
        assert m.shape == (4, 4) and m[1, 2] == pytest.approx(math.log10(0.5)) and np.isnan(m[3, 3])

    def test_total_variation(self):
        a = Heatmap("a", {(1, 1): 1}, 1)
        b = Heatmap("b", {(2, 2): 3, (1, 1): 1}, 4)
        assert total_variation(a, a) == 0.0
        assert total_variation(a, b) == pytest.approx(0.75)


@pytest.fixture(scope="module")
def tiny_run():
    cfg = config_from_dict({"experiment": "X1-005", "replications": 6, "seed": 3,
                            "procedures": ["L2", "F", "IdDim", "IdPen-L"], "maxdim": "12"})
    return run_experiment(cfg)


class TestOutputs:
    def test_empty_records(self, tmp_path):
        emit_outputs(tmp_path, [], [], MODELS, [])
        assert (tmp_path / "records.csv").read_text() == ",".join(RECORD_HEADER) + "\n"

    def test_round_trip(self, tmp_path, tiny_run):
        models = tiny_run.engine.models
        entries = cor_report(tiny_run.records, tiny_run.procedures)
        emit_outputs(tmp_path, tiny_run.records, tiny_run.procedures, models, entries,
                     [selection_heatmap(tiny_run.records, models, "oracle")], {"seed": 3})
        back = {e.procedure: e for e in cor_from_rows(read_rows(tmp_path / "records.csv"))}
        for e in entries:
            assert back[e.procedure].c_or == e.c_or
            assert back[e.procedure].epsilon == e.epsilon
        assert json.loads((tmp_path / "manifest.json").read_text())["seed"] == 3
        rows = read_rows(tmp_path / "records.csv")
        assert heatmap_from_rows(rows, "oracle").counts == \
            selection_heatmap(tiny_run.records, models, "oracle").counts
        assert heatmap_from_rows(rows, "iddim").total == 6

    def test_render_table(self, tiny_run):
        text = render_table(cor_report(tiny_run.records, tiny_run.procedures), "t")
        assert "penLoox2" in text and "IdPenLoo" in text

    def test_rerun_identical(self, tmp_path, tiny_run):
        again = run_experiment(tiny_run.config)
        for sub, run in (("a", tiny_run), ("b", again)):
            emit_outputs(tmp_path / sub, run.records, run.procedures, run.engine.models,
                         cor_report(run.records, run.procedures))
        for name in ("records.csv", "cor.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


class TestConfig:
    def test_shipped_config(self):
        cfg = load_config(Path(__file__).parents[1] / "configs" / "x1-005.toml")
        assert cfg.seed == 12345 and cfg.replications == 1000 and cfg.scenario.n == 200

    def test_custom_scenario(self, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text('replications = 2\n[scenario]\nn = 50\ns = "sin(pi*x)"\nsigma = [1.0, 0.5]\n')
        cfg = load_config(p)
        assert cfg.scenario.s(np.array([0.5]))[0] == pytest.approx(1.0)
        assert cfg.scenario.s.derivative(np.array([0.0]))[0] == pytest.approx(math.pi)

    def test_piecewise_expression(self):
        f = parse_function({"breaks": [0.5], "pieces": ["x", "2*x"]})
        np.testing.assert_allclose(f(np.array([0.25, 0.75])), [0.25, 1.5])

    @pytest.mark.parametrize("raw", [
        {"experiment": "nope"},
        {"scenario": {"s": "x"}},
        {"scenario": {"s": "x + y", "sigma": [1, 1]}},
        {"experiment": "X1-005", "replications": 0},
        {"experiment": "X1-005", "collection": "bins"},
        {"experiment": "X1-005", "scenario": {"mu": 2.0}},
        {"experiment": "X1-005", "procedures": ["Q"]},
    ])
    def test_errors(self, raw):
        with pytest.raises(ValueError):
            config_from_dict(raw)

    def test_bad_toml(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text("replications = = 3\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_sweep(self):
        assert parse_sweep("n=100,200") == (100, 200)
        with pytest.raises(ConfigError):
            parse_sweep("m=100")


class TestCli:
    def test_simulate_table_heatmap(self, tmp_path, capsys):
        out = tmp_path / "run"
        argv = ["simulate", "--experiment", "X1-005", "-N", "4", "--seed", "1", "--maxdim-rule", "10",
                "--procedures", "L2,IdDim", "--out", str(out)]
        assert main(argv) == 0
        assert {"records.csv", "cor.csv", "manifest.json", "heatmap_oracle.csv",
                "heatmap_iddim.csv"} <= {p.name for p in out.iterdir()}
        assert main(["table", "--in", str(out), "--only", "L2"]) == 0
        assert "penLoox2" in capsys.readouterr().out
        assert main(["heatmap", "--in", str(out), "--which", "L2"]) == 0
        assert (out / "heatmap_L2.csv").exists()

    def test_sweep(self, tmp_path):
        argv = ["simulate", "--experiment", "X1-005", "-N", "2", "--maxdim-rule", "6",
                "--procedures", "F", "--out", str(tmp_path), "--sweep", "n=40,80"]
        assert main(argv) == 0
        assert (tmp_path / "n40" / "records.csv").exists() and (tmp_path / "n80" / "cor.csv").exists()

    @pytest.mark.parametrize("argv", [
        ["simulate", "--config", "does-not-exist.toml"],
        ["simulate", "--experiment", "X1-005", "--procedures", "Q"],
        ["table", "--in", "does-not-exist"],
    ])
    def test_errors_exit_2(self, argv, capsys):
        assert main(argv) == 2
        assert "penlab: error" in capsys.readouterr().err

    def test_oracle_check_command(self, capsys):
        assert main(["oracle-check"]) == 0
        assert "FAIL" not in capsys.readouterr().out


def test_checks_report_crashes_as_failures():
    def boom():
        raise RuntimeError("x")

    res = run_checks([("boom", boom)])
    assert not res[0].passed and "RuntimeError" in format_results(res)
    assert len(CHECKS) == 9


def test_procedure_display_without_multiplier():
    assert Procedure("C", "C").display == "MalMax"
