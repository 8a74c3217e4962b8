"""Model choice rules.

Penalized minimization, V-fold and hold-out cross-validation, per-dimension
empirical risk minimizers, the exact path of ``argmin emp + K * pen`` over
``K >= 0``, and the ideal (distribution-aware) procedures used as benchmarks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .models import ModelIndex, build_partition
from .penalties import FoldAssignment, HoldoutSplit
from .regressogram import empirical_risk, excess_loss, fit
from .scenario import Dataset, RegressionScenario


class NoAdmissibleModel(ValueError):
    """Every candidate was filtered out; n is too small for the collection."""


@dataclass(eq=False)
class CriterionTable:
    models: list[ModelIndex]
    emp_risk: np.ndarray
    penalty: np.ndarray
    excess_loss: np.ndarray | None = None
    criterion: np.ndarray = field(init=False)

    def __post_init__(self):
        self.emp_risk = np.asarray(self.emp_risk, dtype=float)
        self.penalty = np.broadcast_to(np.asarray(self.penalty, dtype=float), self.emp_risk.shape)
        if self.excess_loss is not None:
            self.excess_loss = np.asarray(self.excess_loss, dtype=float)
        if len(self.models) != self.emp_risk.size:
            raise ValueError("one emp_risk value per model")
        self.criterion = self.emp_risk + self.penalty

    def __len__(self):
        return len(self.models)

    def with_penalty(self, penalty) -> "CriterionTable":
        return CriterionTable(self.models, self.emp_risk, penalty, self.excess_loss)

    @classmethod
    def build(cls, data: Dataset, models, penalty_fn=None, scenario=None) -> "CriterionTable":
        """Fit every model; ``penalty_fn(model)`` gives its penalty (0 if omitted)."""
        emp, pen, loss = [], [], []
        for m in models:
            f = fit(data, build_partition(m))
            emp.append(empirical_risk(f, data))
            pen.append(0.0 if penalty_fn is None else penalty_fn(m))
            if scenario is not None:
                loss.append(excess_loss(f, scenario))
        return cls(list(models), np.array(emp), np.array(pen),
                   np.array(loss) if scenario is not None else None)


@dataclass(frozen=True)
class SelectionOutcome:
    model: ModelIndex
    index: int
    criterion: float
    excess_loss: float | None = None
    tie_broken: bool = False


def tiebreak_keys(models) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    dims = np.array([m.dim for m in models])
    d1 = np.array([m.d1 for m in models])
    nonconst = np.array([0 if m.is_constant else 1 for m in models])
    return dims, d1, nonconst


def argmin_tiebreak(values, dims, d1, nonconst) -> tuple[int, bool]:
    """Index of the smallest value; ties go to smaller D, then smaller D1, constant first."""
    v = np.asarray(values, dtype=float)
    best = np.min(v)
    cand = np.flatnonzero(v == best)
    if cand.size == 1:
        return int(cand[0]), False
    order = np.lexsort((nonconst[cand], d1[cand], dims[cand]))
    return int(cand[order[0]]), True


def _outcome(models, idx, crit, loss, tie) -> SelectionOutcome:
    return SelectionOutcome(models[idx], idx, float(crit[idx]),
                            None if loss is None else float(loss[idx]), tie)


def select_penalized(table: CriterionTable) -> SelectionOutcome:
    if len(table) == 0:
        raise NoAdmissibleModel("empty criterion table")
    idx, tie = argmin_tiebreak(table.criterion, *tiebreak_keys(table.models))
    return _outcome(table.models, idx, table.criterion, table.excess_loss, tie)


def admissible_models(data: Dataset, models, min_count: int = 2) -> list[ModelIndex]:
    """Drop models with a bin holding fewer than ``min_count`` points."""
    kept = []
    for m in models:
        part = build_partition(m)
        counts = np.bincount(np.searchsorted(part.breakpoints, data.x, side="right") - 1,
                             minlength=part.bin_count)
        if counts.min() >= min_count:
            kept.append(m)
    if not kept:
        raise NoAdmissibleModel("every model has a bin with fewer than 2 points")
    return kept


def vfcv_criterion(data: Dataset, model: ModelIndex, folds: FoldAssignment) -> float:
    part = build_partition(model)
    total = 0.0
    for j in range(folds.V):
        held = folds.fold_of == j
        f = fit(data.subset(~held), part)
        total += empirical_risk(f, data.subset(held))
    return total / folds.V


def holdout_criterion(data: Dataset, model: ModelIndex, split: HoldoutSplit) -> float:
    f = fit(data.subset(split.train), build_partition(model))
    return empirical_risk(f, data.subset(split.holdout))


def _select_by(models, crit, scenario, data) -> SelectionOutcome:
    crit = np.asarray(crit)
    idx, tie = argmin_tiebreak(crit, *tiebreak_keys(models))
    loss = None
    if scenario is not None:
        loss = excess_loss(fit(data, build_partition(models[idx])), scenario)
    return SelectionOutcome(models[idx], idx, float(crit[idx]), loss, tie)


def select_vfcv(data: Dataset, models, folds: FoldAssignment,
                scenario: RegressionScenario | None = None) -> SelectionOutcome:
    models = list(models)
    crit = [vfcv_criterion(data, m, folds) for m in models]
    return _select_by(models, crit, scenario, data)


def select_holdout(data: Dataset, models, split: HoldoutSplit,
                   scenario: RegressionScenario | None = None) -> SelectionOutcome:
    models = list(models)
    crit = [holdout_criterion(data, m, split) for m in models]
    return _select_by(models, crit, scenario, data)


def best_per_dimension_indices(emp_risk, models) -> dict[int, int]:
    """For each total dimension, the index of the empirical risk minimizer.

    Ties go to the smaller ``|D1 - D2|``, then the smaller ``D1``.
    """
    emp = np.asarray(emp_risk, dtype=float)
    dims = np.array([m.dim for m in models])
    gap = np.array([abs(m.d1 - m.d2) if m.split is not None else 0 for m in models])
    d1 = np.array([m.d1 for m in models])
    order = np.lexsort((d1, gap, emp, dims))
    out: dict[int, int] = {}
    for i in order:
        out.setdefault(int(dims[i]), int(i))
    return out


def best_per_dimension(data_or_table, models=None) -> dict[int, ModelIndex]:
    if isinstance(data_or_table, CriterionTable):
        table = data_or_table
    else:
        table = CriterionTable.build(data_or_table, models)
    idx = best_per_dimension_indices(table.emp_risk, table.models)
    return {d: table.models[i] for d, i in sorted(idx.items())}


# ----------------------------------------------------------------------------
# Regularization path over the penalty multiplier
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class PathVertex:
    index: int
    pen_shape: float
    emp_risk: float
    k_lo: float
    k_hi: float


@dataclass(frozen=True)
class PathResult:
    vertices: tuple[PathVertex, ...]

    def indices(self) -> list[int]:
        return [v.index for v in self.vertices]

    def select(self, K: float) -> int:
        """Model index selected at multiplier ``K`` (interior points of intervals)."""
        for v in self.vertices:
            if v.k_lo <= K < v.k_hi:
                return v.index
        return self.vertices[-1].index


def path_vertices(emp_risk, pen_shape, dims=None, d1=None, nonconst=None) -> PathResult:
    """Exact breakpoints of ``K -> argmin_m emp(m) + K pen(m)`` for ``K >= 0``.

    The selected models are the vertices of the lower-left convex hull of the
    points ``(pen, emp)``, walked from ``K = 0`` (smallest empirical risk)
    toward ``K = inf`` (smallest penalty).  Vertex ``i`` is the unique
    minimizer on the open interval ``(k_lo, k_hi)``.
    """
    emp = np.asarray(emp_risk, dtype=float)
    pen = np.asarray(pen_shape, dtype=float)
    if emp.size == 0:
        raise ValueError("empty path")
    if not np.all(np.isfinite(pen)):
        raise ValueError("pen_shape must be finite")
    m = emp.size
    if dims is None:
        dims = np.zeros(m, dtype=int)
        d1 = np.zeros(m, dtype=int)
        nonconst = np.zeros(m, dtype=int)
    # K = 0: smallest empirical risk, then smallest penalty
    emin = emp.min()
    cand = np.flatnonzero(emp == emin)
    cur = int(cand[np.lexsort((nonconst[cand], d1[cand], dims[cand], pen[cand]))[0]])
    verts = []
    k_lo = 0.0
    while True:
        lower = np.flatnonzero(pen < pen[cur])
        if lower.size == 0:
            verts.append(PathVertex(cur, float(pen[cur]), float(emp[cur]), k_lo, np.inf))
            break
        ks = (emp[lower] - emp[cur]) / (pen[cur] - pen[lower])
        kmin = ks.min()
        hit = lower[ks == kmin]
        # several models on the same edge: jump to the far end of it
        nxt = int(hit[np.lexsort((nonconst[hit], d1[hit], dims[hit], pen[hit]))[0]])
        verts.append(PathVertex(cur, float(pen[cur]), float(emp[cur]), k_lo, float(kmin)))
        k_lo = float(kmin)
        cur = nxt
    return PathResult(tuple(verts))


def penalty_path(table: CriterionTable, pen_shape) -> PathResult:
    return path_vertices(table.emp_risk, pen_shape, *tiebreak_keys(table.models))


# ----------------------------------------------------------------------------
# Ideal procedures
# ----------------------------------------------------------------------------

def ideal_from_path(path: PathResult, loss) -> int:
    """Path vertex with the smallest excess loss (the best K >= 0)."""
    loss = np.asarray(loss)
    idx = path.indices()
    return idx[int(np.argmin(loss[idx]))]


def ideal_dimension(emp_risk, loss, models) -> int:
    per_dim = best_per_dimension_indices(emp_risk, models)
    idx = np.array(sorted(per_dim.values()))
    loss = np.asarray(loss)
    return int(idx[int(np.argmin(loss[idx]))])


@dataclass(frozen=True)
class IdealOutcomes:
    id_dim: SelectionOutcome
    id_lin: SelectionOutcome
    id_pen: dict[str, SelectionOutcome]


def ideal_procedures(data: Dataset, models, scenario: RegressionScenario,
                     pen_shape_by_kind: dict | None = None) -> IdealOutcomes:
    """IdDim, IdLin and IdPen for each penalty shape (which may use the known P).

    ``pen_shape_by_kind`` maps a name to a per-model penalty array, or to a
    callable ``model -> value``.
    """
    table = CriterionTable.build(data, list(models), scenario=scenario)
    loss = table.excess_loss

    def pick(i):
        return SelectionOutcome(table.models[i], i, float(table.emp_risk[i]), float(loss[i]))

    dims = np.array([m.dim for m in table.models], dtype=float)
    id_dim = pick(ideal_dimension(table.emp_risk, loss, table.models))
    id_lin = pick(ideal_from_path(penalty_path(table, dims), loss))
    id_pen = {}
    for name, shape in (pen_shape_by_kind or {}).items():
        if callable(shape):
            shape = np.array([shape(m) for m in table.models])
        id_pen[name] = pick(ideal_from_path(penalty_path(table, shape), loss))
    return IdealOutcomes(id_dim, id_lin, id_pen)


def oracle_index(loss, models) -> int:
    idx, _ = argmin_tiebreak(loss, *tiebreak_keys(models))
    return idx
