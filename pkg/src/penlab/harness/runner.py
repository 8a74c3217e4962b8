"""The replication loop."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from ..models import enumerate_models
from ..selection import NoAdmissibleModel
from .config import ExperimentConfig
from .engine import Procedure, ReplicationEngine, ReplicationRecord, parse_procedures, run_replication

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExperimentRun:
    config: ExperimentConfig
    engine: ReplicationEngine
    procedures: list[Procedure]
    records: list[ReplicationRecord]


def build_engine(config: ExperimentConfig) -> ReplicationEngine:
    models = enumerate_models(config.collection, config.scenario.n)
    return ReplicationEngine(config.scenario, models)


def run_experiment(config: ExperimentConfig) -> ExperimentRun:
    """Run every replication; records come back in replication order.

    Each replication draws from streams keyed by ``(seed, r)``, so the
    result does not depend on the thread count or on scheduling.
    """
    engine = build_engine(config)
    procedures = parse_procedures(config.procedures, config.c_ov)
    log.info("%s: %d models, %d segments, %d procedures, N=%d",
             config.scenario.name, len(engine.models), len(engine.model_set.segments),
             len(procedures), config.replications)

    def task(r: int) -> ReplicationRecord:
        return run_replication(engine, procedures, config.seed, r)

    reps = range(config.replications)
    try:
        if config.threads == 1:
            records = [task(r) for r in reps]
        else:
            with ThreadPoolExecutor(max_workers=config.threads) as pool:
                records = list(pool.map(task, reps))
    except NoAdmissibleModel as exc:
        raise NoAdmissibleModel(f"{config.scenario.name}, n={config.scenario.n}: {exc}") from exc
    return ExperimentRun(config, engine, procedures, records)
