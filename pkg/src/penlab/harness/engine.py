"""Per-replication evaluation of every model and every procedure.

All the quantities the procedures compare are sums over bins, and every
model of a collection is made of one or two segments (equal-width bins on
``[0, t)`` and ``[t, 1)``).  The engine therefore computes each quantity once
per distinct segment and adds the two segment values of each model, which
turns ``O(|models| * n * V)`` work into ``O(|segments| * n * V)``.

The empty-bin fallback (global training mean) does not depend on the model,
so it stays additive as well.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..models import ModelIndex, ModelSet
from ..penalties import (
    FoldAssignment,
    HoldoutSplit,
    delta_np,
    estimate_variance_diff,
    loo_bin_terms,
    make_holdout_split,
    make_vfold_assignment,
)
from ..scenario import Dataset, RegressionScenario, bin_moments, sample
from ..selection import argmin_tiebreak, best_per_dimension_indices, ideal_from_path, path_vertices

VFOLD_VALUES = (2, 5, 10)

# letter -> (short name, tag, V)
ROSTER = {
    "A": ("Epenid", "epenid", 0),
    "B": ("MalEst", "mal-est", 0),
    "C": ("MalMax", "mal-max", 0),
    "D": ("HO", "ho-cv", 0),
    "E": ("2FCV", "vfcv", 2),
    "F": ("5FCV", "vfcv", 5),
    "G": ("10FCV", "vfcv", 10),
    "H": ("penHO", "holdout", 0),
    "I": ("pen2F", "vfold", 2),
    "J": ("pen5F", "vfold", 5),
    "K": ("pen10F", "vfold", 10),
    "L": ("penLoo", "loo", 0),
}
PENALIZED = "ABCHIJKL"
CV_ONLY = "DEFG"
IDPEN_LETTERS = "HIJKLA"
DEFAULT_COV = (1.0, 1.25, 2.0, 3.0, 4.0)


@dataclass(frozen=True)
class Procedure:
    """One column of the comparison: a letter with an optional multiplier, or an ideal rule."""

    token: str
    letter: str | None = None
    c_ov: float | None = None
    ideal: str | None = None  # "dim", "lin" or "pen"

    @property
    def display(self) -> str:
        if self.ideal == "dim":
            return "IdDim"
        if self.ideal == "lin":
            return "IdLin"
        name = ROSTER[self.letter][0]
        if self.ideal == "pen":
            return "IdPen" + name[3:] if name.startswith("pen") else "Id" + name
        if self.c_ov is None or self.c_ov == 1.0:
            return name
        return f"{name}x{self.c_ov:g}"


def _cov_token(letter: str, c: float) -> str:
    return f"{letter}{c:g}"


def parse_procedures(tokens, c_ov_grid=DEFAULT_COV) -> list[Procedure]:
    """Expand roster tokens.

    ``all`` is the full roster; ``J`` is the 5-fold penalty at every
    multiplier of the grid, ``J2`` only at 2; ``IdDim``, ``IdLin`` and
    ``IdPen-L`` are the ideal procedures.
    """
    out: list[Procedure] = []
    seen = set()

    def add(p: Procedure):
        if p.token not in seen:
            seen.add(p.token)
            out.append(p)

    for raw in tokens:
        tok = raw.strip()
        if not tok:
            continue
        if tok == "all":
            for letter in ROSTER:
                if letter in CV_ONLY:
                    add(Procedure(letter, letter))
                else:
                    for c in c_ov_grid:
                        add(Procedure(_cov_token(letter, c), letter, float(c)))
            add(Procedure("IdDim", ideal="dim"))
            add(Procedure("IdLin", ideal="lin"))
            for letter in IDPEN_LETTERS:
                add(Procedure(f"IdPen-{letter}", letter, ideal="pen"))
        elif tok == "IdDim":
            add(Procedure("IdDim", ideal="dim"))
        elif tok == "IdLin":
            add(Procedure("IdLin", ideal="lin"))
        elif tok.startswith("IdPen-"):
            letter = tok[len("IdPen-"):]
            if letter not in PENALIZED:
                raise ValueError(f"no penalty behind {tok!r}")
            add(Procedure(tok, letter, ideal="pen"))
        elif tok[0] in ROSTER:
            letter, rest = tok[0], tok[1:]
            if letter in CV_ONLY:
                if rest:
                    raise ValueError(f"{letter} takes no overpenalization factor")
                add(Procedure(letter, letter))
            elif rest:
                c = float(rest)
                if c < 0:
                    raise ValueError("overpenalization factor must be >= 0")
                add(Procedure(_cov_token(letter, c), letter, c))
            else:
                for c in c_ov_grid:
                    add(Procedure(_cov_token(letter, c), letter, float(c)))
        else:
            raise ValueError(f"unknown procedure token {tok!r}")
    return out


# ----------------------------------------------------------------------------
# Per-segment evaluation
# ----------------------------------------------------------------------------

@dataclass(eq=False)
class ModelValues:
    """Per-model arrays for one sample (all models of the collection)."""

    admissible: np.ndarray
    emp_risk: np.ndarray
    loss: np.ndarray
    pen_loo: np.ndarray
    pen_holdout: np.ndarray
    crit_holdout: np.ndarray
    pen_vfold: dict[int, np.ndarray] = field(default_factory=dict)
    crit_vfold: dict[int, np.ndarray] = field(default_factory=dict)
    sigma2_hat: float = 0.0


def _resampling_terms(y, b, k, labels, n_folds, fold_sizes, fold_sums, n):
    """Sums over one segment of squared errors of the training-fold refits.

    Returns ``(full, train, held)`` arrays of shape ``(n_folds,)``: squared
    error sums over all points, over training points and over held-out points
    of the segment, for the fit trained without fold ``j``.
    """
    total_sum = float(fold_sums.sum())
    cnt = np.bincount(labels * k + b, minlength=n_folds * k).reshape(n_folds, k)
    sm = np.bincount(labels * k + b, weights=y, minlength=n_folds * k).reshape(n_folds, k)
    c_tr = cnt.sum(axis=0)[None, :] - cnt
    s_tr = sm.sum(axis=0)[None, :] - sm
    g = (total_sum - fold_sums) / (n - fold_sizes)
    mean = np.where(c_tr > 0, s_tr / np.maximum(c_tr, 1), g[:, None])
    err = (y[None, :] - mean[:, b]) ** 2
    held = labels[None, :] == np.arange(n_folds)[:, None]
    train_part = np.where(held, 0.0, err).sum(axis=1)
    held_part = np.where(held, err, 0.0).sum(axis=1)
    return err.sum(axis=1), train_part, held_part


class ReplicationEngine:
    """Evaluates all models of a collection on samples from one scenario."""

    def __init__(self, scenario: RegressionScenario, models: list[ModelIndex], n: int | None = None):
        self.scenario = scenario
        self.n = scenario.n if n is None else int(n)
        self.model_set = ModelSet(models)
        self.models = self.model_set.models
        self._bp = [seg.breakpoints() for seg in self.model_set.segments]
        self._moments = [bin_moments(scenario, bp) for bp in self._bp]
        self.epenid = self.model_set.combine(np.array([self._segment_epenid(i) for i in range(len(self._bp))]))
        self.dims = self.model_set.dims.astype(float)
        d1 = self.model_set.d1
        nonconst = (~self.model_set.is_constant).astype(int)
        self._keys = (self.model_set.dims, d1, nonconst)

    def _segment_epenid(self, i: int) -> float:
        m0, m1, m2, v2 = self._moments[i]
        sig2 = v2 / m0 + np.maximum(m2 - m1 * m1 / m0, 0.0) / m0
        deltas = np.array([delta_np(self.n, float(p)) for p in m0])
        return float(np.sum((2.0 + deltas) * sig2) / self.n)

    # -- one sample ---------------------------------------------------------

    def evaluate(self, data: Dataset, folds: dict[int, FoldAssignment],
                 split: HoldoutSplit | None) -> ModelValues:
        """All per-model quantities for one sample.

        ``folds`` may be empty and ``split`` may be ``None`` when the
        corresponding procedures are not needed; their arrays are then
        absent or filled with ``nan``.
        """
        n = data.n
        order = data.sort_order
        xs = data.x[order]
        ys = data.y[order]
        total = float(ys.sum())
        fold_labels = {V: folds[V].fold_of[order] for V in folds}
        fold_info = {}
        for V, lab in fold_labels.items():
            sizes = np.bincount(lab, minlength=V)
            sums = np.bincount(lab, weights=ys, minlength=V)
            fold_info[V] = (sizes, sums)
        # hold-out as a two-label scheme: label 0 = held out, label 1 = training
        if split is not None:
            ho_train = np.zeros(n, dtype=bool)
            ho_train[split.train] = True
            ho_lab_sorted = ho_train[order].astype(np.intp)
            n_train = int(ho_train.sum())
            ho_sizes = np.array([n - n_train, n_train])
            ho_sums = np.bincount(ho_lab_sorted, weights=ys, minlength=2)

        nseg = len(self._bp)
        bad = np.zeros(nseg)
        emp = np.zeros(nseg)
        loss = np.zeros(nseg)
        loo = np.zeros(nseg)
        pen_ho = np.zeros(nseg)
        crit_ho = np.zeros(nseg)
        pen_vf = {V: np.zeros(nseg) for V in folds}
        crit_vf = {V: np.zeros(nseg) for V in folds}
        single_err_scale = (n - 1.0) / n / n

        for s, seg in enumerate(self.model_set.segments):
            k = seg.bins
            i0 = int(np.searchsorted(xs, seg.lo, side="left"))
            i1 = int(np.searchsorted(xs, seg.hi, side="left"))
            x = xs[i0:i1]
            y = ys[i0:i1]
            b = np.searchsorted(self._bp[s], x, side="right") - 1
            cnt = np.bincount(b, minlength=k)
            sm = np.bincount(b, weights=y, minlength=k)
            bad[s] = float(cnt.min() < 2)
            mean = np.where(cnt > 0, sm / np.maximum(cnt, 1), total / n)
            r = y - mean[b]
            emp[s] = float(np.sum(r * r)) / n
            m0, m1, m2, _ = self._moments[s]
            loss[s] = float(np.sum(m2 - 2.0 * mean * m1 + mean * mean * m0))
            rss = np.bincount(b, weights=r * r, minlength=k)
            multi = cnt >= 2
            loo[s] = float(np.sum(loo_bin_terms(cnt[multi], rss[multi], n)))
            lone = cnt[b] == 1
            if lone.any():
                g = (total - y[lone]) / (n - 1.0)
                loo[s] += single_err_scale * float(np.sum((y[lone] - g) ** 2))

            for V, lab in fold_labels.items():
                sizes, sums = fold_info[V]
                full, train, held = _resampling_terms(y, b, k, lab[i0:i1], V, sizes, sums, n)
                pen_vf[V][s] = (V - 1.0) / V * float(np.sum(full / n - train / (n - sizes)))
                crit_vf[V][s] = float(np.sum(held / sizes)) / V

            # hold-out: train on label 1 only, so "fold" 0 is the one left out
            if split is None:
                pen_ho[s] = crit_ho[s] = np.nan
                continue
            full, train, held = _resampling_terms(y, b, k, ho_lab_sorted[i0:i1], 2, ho_sizes, ho_sums, n)
            pen_ho[s] = n_train / (n - n_train) * (full[0] / n - train[0] / n_train)
            crit_ho[s] = held[0] / (n - n_train)

        ms = self.model_set
        return ModelValues(
            admissible=ms.combine(bad) == 0,
            emp_risk=ms.combine(emp),
            loss=ms.combine(loss),
            pen_loo=ms.combine(loo),
            pen_holdout=ms.combine(pen_ho),
            crit_holdout=ms.combine(crit_ho),
            pen_vfold={V: ms.combine(v) for V, v in pen_vf.items()},
            crit_vfold={V: ms.combine(v) for V, v in crit_vf.items()},
            sigma2_hat=estimate_variance_diff(data),
        )

    # -- procedures ---------------------------------------------------------

    def base_penalty(self, letter: str, values: ModelValues) -> np.ndarray:
        tag, V = ROSTER[letter][1], ROSTER[letter][2]
        n = self.n
        if tag == "epenid":
            return self.epenid
        if tag == "mal-est":
            return 2.0 * values.sigma2_hat * self.dims / n
        if tag == "mal-max":
            return 2.0 * self.scenario.sigma_sup ** 2 * self.dims / n
        if tag == "holdout":
            return values.pen_holdout
        if tag == "vfold":
            return values.pen_vfold[V]
        if tag == "loo":
            return values.pen_loo
        raise ValueError(f"{letter} is not a penalization procedure")

    def select(self, procedures: list[Procedure], values: ModelValues) -> dict[str, int]:
        """Model index (into the full collection) chosen by each procedure."""
        adm = np.flatnonzero(values.admissible)
        if adm.size == 0:
            from ..selection import NoAdmissibleModel

            raise NoAdmissibleModel("every model has a bin with fewer than 2 points")
        keys = tuple(k[adm] for k in self._keys)
        emp = values.emp_risk[adm]
        loss = values.loss[adm]
        out: dict[str, int] = {}
        for proc in procedures:
            if proc.ideal == "dim":
                sub = [self.models[i] for i in adm]
                per_dim = best_per_dimension_indices(emp, sub)
                cand = np.array(sorted(per_dim.values()))
                j = int(cand[int(np.argmin(loss[cand]))])
            elif proc.ideal in ("lin", "pen"):
                shape = self.dims if proc.ideal == "lin" else self.base_penalty(proc.letter, values)
                path = path_vertices(emp, shape[adm], *keys)
                j = ideal_from_path(path, loss)
            elif proc.letter in CV_ONLY:
                V = ROSTER[proc.letter][2]
                crit = values.crit_holdout if V == 0 else values.crit_vfold[V]
                j, _ = argmin_tiebreak(crit[adm], *keys)
            else:
                pen = self.base_penalty(proc.letter, values)[adm]
                j, _ = argmin_tiebreak(emp + proc.c_ov * pen, *keys)
            out[proc.token] = int(adm[j])
        return out

    def oracle(self, values: ModelValues) -> int:
        adm = np.flatnonzero(values.admissible)
        keys = tuple(k[adm] for k in self._keys)
        j, _ = argmin_tiebreak(values.loss[adm], *keys)
        return int(adm[j])

    def per_dimension(self, values: ModelValues) -> dict[int, int]:
        adm = np.flatnonzero(values.admissible)
        sub = [self.models[i] for i in adm]
        per_dim = best_per_dimension_indices(values.emp_risk[adm], sub)
        return {d: int(adm[j]) for d, j in per_dim.items()}


# ----------------------------------------------------------------------------
# Seeds and one replication
# ----------------------------------------------------------------------------

def replication_seeds(base_seed: int, r: int) -> dict[str, tuple]:
    """Independent streams for the data, the hold-out split and each fold assignment."""
    seeds = {"data": (base_seed, r, 0), "holdout": (base_seed, r, 1)}
    for V in VFOLD_VALUES:
        seeds[f"vfold{V}"] = (base_seed, r, 2, V)
    return seeds


@dataclass(frozen=True)
class ReplicationRecord:
    replication: int
    oracle: int
    oracle_loss: float
    selected: dict[str, int]
    losses: dict[str, float]
    per_dimension: dict[int, int]
    seeds: dict[str, tuple]

    def check_oracle_dominance(self, tol: float = 0.0) -> bool:
        return all(v >= self.oracle_loss - tol for v in self.losses.values())


def run_replication(engine: ReplicationEngine, procedures: list[Procedure], base_seed: int,
                    r: int) -> ReplicationRecord:
    seeds = replication_seeds(base_seed, r)
    data = sample(engine.scenario, seeds["data"], n=engine.n)
    folds = {V: make_vfold_assignment(data, V, seeds[f"vfold{V}"]) for V in VFOLD_VALUES}
    split = make_holdout_split(data, seeds["holdout"])
    values = engine.evaluate(data, folds, split)
    chosen = engine.select(procedures, values)
    orc = engine.oracle(values)
    return ReplicationRecord(
        replication=r,
        oracle=orc,
        oracle_loss=float(values.loss[orc]),
        selected=chosen,
        losses={tok: float(values.loss[i]) for tok, i in chosen.items()},
        per_dimension=engine.per_dimension(values),
        seeds=seeds,
    )
