"""Command line entry point: ``penlab simulate | oracle-check | table | heatmap``."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from ..models import CollectionSpec
from .config import ConfigError, ExperimentConfig, config_from_dict, load_config, parse_sweep
from .report import (
    cor_from_rows,
    cor_report,
    emit_outputs,
    heatmap_from_rows,
    read_rows,
    render_table,
    selection_heatmap,
    versions,
    write_heatmap,
)
from .runner import run_experiment

log = logging.getLogger("penlab")


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    changes = {}
    if args.replications is not None:
        changes["replications"] = args.replications
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.threads is not None:
        changes["threads"] = args.threads
    if args.out is not None:
        changes["out_dir"] = Path(args.out)
    if args.procedures is not None:
        changes["procedures"] = tuple(args.procedures.split(","))
    if args.collection is not None or args.maxdim_rule is not None:
        coll = args.collection or cfg.collection.token
        rule = args.maxdim_rule or str(cfg.collection.maxdim_rule)
        changes["collection"] = CollectionSpec.parse(coll, rule)
    if args.sweep is not None:
        changes["sweep_n"] = parse_sweep(args.sweep)
    return replace(cfg, **changes) if changes else cfg


def _simulate_one(cfg: ExperimentConfig, out_dir: Path) -> int:
    t0 = time.perf_counter()
    run = run_experiment(cfg)
    wall = time.perf_counter() - t0
    models = run.engine.models
    entries = cor_report(run.records, run.procedures)
    heatmaps = []
    two_regime = all(m.split is not None or m.is_constant for m in models)
    if two_regime:
        heatmaps.append(selection_heatmap(run.records, models, "oracle"))
        if any(p.token == "IdDim" for p in run.procedures):
            heatmaps.append(selection_heatmap(run.records, models, "iddim"))
    manifest = {
        "config": cfg.echo(),
        "seed": cfg.seed,
        "versions": versions(),
        "wall_time_seconds": round(wall, 3),
        "models": len(models),
        "threads": cfg.threads,
    }
    emit_outputs(out_dir, run.records, run.procedures, models, entries, heatmaps, manifest)
    print(render_table(entries, f"{cfg.scenario.name}  n={cfg.scenario.n}  N={cfg.replications}"))
    print(f"wrote {out_dir} ({wall:.1f}s)")
    bad = [r.replication for r in run.records if not r.check_oracle_dominance()]
    if bad:
        print(f"oracle dominance violated in replications {bad[:10]}", file=sys.stderr)
        return 1
    return 0


def cmd_simulate(args) -> int:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = config_from_dict({"experiment": args.experiment or "X1-005"})
    cfg = _apply_overrides(cfg, args)
    out = cfg.out_dir or Path("runs") / cfg.scenario.name
    if not cfg.sweep_n:
        return _simulate_one(cfg, out)
    status = 0
    for n in cfg.sweep_n:
        status |= _simulate_one(cfg.with_n(n), out / f"n{n}")
    return status


def cmd_oracle_check(args) -> int:
    from .oracle_check import format_results, run_checks

    results = run_checks()
    print(format_results(results))
    return 0 if all(r.passed for r in results) else 1


def cmd_table(args) -> int:
    src = Path(args.input)
    entries = cor_from_rows(read_rows(src / "records.csv"))
    if args.only:
        keep = set(args.only.split(","))
        entries = [e for e in entries if e.procedure in keep]
    print(render_table(entries, str(src)))
    return 0


def cmd_heatmap(args) -> int:
    src = Path(args.input)
    hm = heatmap_from_rows(read_rows(src / "records.csv"), args.which)
    path = src / f"heatmap_{args.which}.csv"
    write_heatmap(path, hm)
    for (d1, d2), v in hm.log10freq().items():
        print(f"{d1:3d} {d2:3d} {v: .4f}")
    print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="penlab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a simulation study")
    src = sim.add_mutually_exclusive_group()
    src.add_argument("--config", help="TOML experiment file")
    src.add_argument("--experiment", help="built-in experiment name (default X1-005)")
    sim.add_argument("--replications", "-N", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--threads", type=int)
    sim.add_argument("--out")
    sim.add_argument("--collection", help="reg | reg-half | reg-t=<t> | reg-var")
    sim.add_argument("--maxdim-rule", help="log | log2 | <int>")
    sim.add_argument("--procedures", help="comma-separated tokens, e.g. all or L2,C,IdDim")
    sim.add_argument("--sweep", help="n=<comma-separated sample sizes>")
    sim.set_defaults(func=cmd_simulate)

    chk = sub.add_parser("oracle-check", help="check exact formulas against independent oracles")
    chk.set_defaults(func=cmd_oracle_check)

    tab = sub.add_parser("table", help="print accuracy indices from a run directory")
    tab.add_argument("--in", dest="input", required=True)
    tab.add_argument("--only", help="comma-separated procedure tokens")
    tab.set_defaults(func=cmd_table)

    hm = sub.add_parser("heatmap", help="selection frequencies over (D1, D2)")
    hm.add_argument("--in", dest="input", required=True)
    hm.add_argument("--which", required=True, help="oracle | iddim | <procedure token>")
    hm.set_defaults(func=cmd_heatmap)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"penlab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
