"""Accuracy indices, selection heatmaps and the files written after a run."""

from __future__ import annotations

import csv
import json
import math
import platform
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .engine import Procedure

RECORD_HEADER = ("replication", "procedure", "C_ov", "model", "D1", "D2", "loss",
                 "oracle_model", "oracle_D1", "oracle_D2", "oracle_loss")
COR_HEADER = ("procedure", "C_ov", "C_or", "epsilon")
HEATMAP_HEADER = ("D1", "D2", "log10freq")


@dataclass(frozen=True)
class CorEntry:
    procedure: str
    c_ov: float | None
    c_or: float
    epsilon: float
    display: str = ""


def compute_cor(selected_losses, oracle_losses) -> tuple[float, float]:
    """``mean(selected) / mean(oracle)`` and ``sd(selected) / (sqrt(N) mean(oracle))``.

    ``epsilon`` is ``nan`` when ``N < 2``.
    """
    sel = np.asarray(selected_losses, dtype=float)
    orc = np.asarray(oracle_losses, dtype=float)
    if sel.shape != orc.shape or sel.size == 0:
        raise ValueError("need one selected and one oracle loss per replication")
    denom = float(np.mean(orc))
    if denom <= 0.0:
        raise ValueError("mean oracle loss is zero; the accuracy index is undefined")
    c_or = float(np.mean(sel)) / denom
    if sel.size < 2:
        return c_or, math.nan
    eps = float(np.std(sel, ddof=1)) / (math.sqrt(sel.size) * denom)
    return c_or, eps


def cor_report(records, procedures: list[Procedure]) -> list[CorEntry]:
    oracle = [r.oracle_loss for r in records]
    out = []
    for p in procedures:
        c_or, eps = compute_cor([r.losses[p.token] for r in records], oracle)
        out.append(CorEntry(p.token, p.c_ov if p.ideal is None else None, c_or, eps, p.display))
    return out


# ----------------------------------------------------------------------------
# Heatmaps
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class Heatmap:
    which: str
    counts: dict[tuple[int, int], int]
    total: int

    def log10freq(self) -> dict[tuple[int, int], float]:
        """Only selected cells; missing cells were never selected."""
        return {cell: math.log10(c / self.total) for cell, c in sorted(self.counts.items())}

    def frequencies(self) -> dict[tuple[int, int], float]:
        return {cell: c / self.total for cell, c in self.counts.items()}

    def matrix(self, max_d: int) -> np.ndarray:
        """Dense ``(max_d + 1) x (max_d + 1)`` array of log10 frequencies, nan where unselected."""
        out = np.full((max_d + 1, max_d + 1), np.nan)
        for (d1, d2), v in self.log10freq().items():
            out[d1, d2] = v
        return out


def _coords(model) -> tuple[int, int]:
    return model.coords


def selection_heatmap(records, models, which: str) -> Heatmap:
    """Selection counts over ``(D1, D2)``; ``which`` is ``oracle``, ``iddim`` or a procedure token."""
    if any(m.split is None and not m.is_constant for m in models):
        raise ValueError("heatmaps need a two-regime collection")
    if not records:
        raise ValueError("no records")
    counts: Counter = Counter()
    for r in records:
        if which == "oracle":
            idx = r.oracle
        elif which.lower() == "iddim":
            idx = r.selected.get("IdDim")
            if idx is None:
                raise KeyError("IdDim was not run")
        else:
            if which not in r.selected:
                raise KeyError(f"procedure {which!r} was not run")
            idx = r.selected[which]
        counts[_coords(models[idx])] += 1
    return Heatmap(which, dict(counts), len(records))


def heatmap_from_rows(rows, which: str) -> Heatmap:
    """Rebuild a heatmap from parsed ``records.csv`` rows."""
    counts: Counter = Counter()
    reps = set()
    for row in rows:
        if which == "oracle":
            if row["replication"] in reps:
                continue
            reps.add(row["replication"])
            cell = (int(row["oracle_D1"]), int(row["oracle_D2"]))
        else:
            token = "IdDim" if which.lower() == "iddim" else which
            if row["procedure"] != token:
                continue
            cell = (int(row["D1"]), int(row["D2"]))
        counts[cell] += 1
    total = sum(counts.values())
    if total == 0:
        raise KeyError(f"no rows for {which!r}")
    return Heatmap(which, dict(counts), total)


def total_variation(a: Heatmap, b: Heatmap) -> float:
    fa, fb = a.frequencies(), b.frequencies()
    return 0.5 * sum(abs(fa.get(c, 0.0) - fb.get(c, 0.0)) for c in set(fa) | set(fb))


# ----------------------------------------------------------------------------
# Files
# ----------------------------------------------------------------------------

def _fmt_cov(c) -> str:
    return "" if c is None else repr(float(c))


def _model_cells(model) -> tuple[str, int, int]:
    d1, d2 = model.coords
    return model.label(), d1, d2


def record_rows(records, procedures: list[Procedure], models):
    for r in records:
        om, od1, od2 = _model_cells(models[r.oracle])
        for p in procedures:
            m, d1, d2 = _model_cells(models[r.selected[p.token]])
            yield (r.replication, p.token, _fmt_cov(p.c_ov if p.ideal is None else None), m, d1, d2,
                   repr(r.losses[p.token]), om, od1, od2, repr(r.oracle_loss))


def _open_for_write(path: Path):
    try:
        return path.open("w", newline="", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def write_records(path: Path, records, procedures, models):
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RECORD_HEADER)
        w.writerows(record_rows(records, procedures, models))


def write_cor(path: Path, entries: list[CorEntry]):
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COR_HEADER)
        for e in entries:
            w.writerow((e.procedure, _fmt_cov(e.c_ov), repr(e.c_or), repr(e.epsilon)))


def write_heatmap(path: Path, heatmap: Heatmap):
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HEATMAP_HEADER)
        for (d1, d2), v in heatmap.log10freq().items():
            w.writerow((d1, d2, repr(v)))


def versions() -> dict:
    import scipy

    from .. import __version__

    return {"python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "penlab": __version__}


def emit_outputs(out_dir, records, procedures, models, entries, heatmaps=(), manifest=None):
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    write_records(out / "records.csv", records, procedures, models)
    write_cor(out / "cor.csv", entries)
    for hm in heatmaps:
        write_heatmap(out / f"heatmap_{hm.which}.csv", hm)
    if manifest is not None:
        with _open_for_write(out / "manifest.json") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=str)
            fh.write("\n")
    return out


# ----------------------------------------------------------------------------
# Reading back
# ----------------------------------------------------------------------------

def read_rows(path) -> list[dict]:
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc


def cor_from_rows(rows) -> list[CorEntry]:
    """Recompute the accuracy indices from ``records.csv`` rows."""
    by_proc: dict[str, list] = {}
    covs: dict[str, str] = {}
    for row in rows:
        by_proc.setdefault(row["procedure"], []).append(row)
        covs[row["procedure"]] = row["C_ov"]
    out = []
    for proc, rs in by_proc.items():
        rs = sorted(rs, key=lambda r: int(r["replication"]))
        c_or, eps = compute_cor([float(r["loss"]) for r in rs], [float(r["oracle_loss"]) for r in rs])
        cov = covs[proc]
        out.append(CorEntry(proc, float(cov) if cov else None, c_or, eps))
    return out


def render_table(entries: list[CorEntry], title: str = "") -> str:
    """Plain-text table of ``C_or +- epsilon``, one row per procedure."""
    from .engine import Procedure, ROSTER

    lines = [title] if title else []
    width = 0
    rows = []
    for e in entries:
        name = e.display
        if not name:
            tok = e.procedure
            if tok in ("IdDim", "IdLin"):
                name = tok
            elif tok.startswith("IdPen-"):
                name = Procedure(tok, tok[-1], ideal="pen").display
            elif tok[0] in ROSTER:
                name = Procedure(tok, tok[0], e.c_ov).display
            else:
                name = tok
        rows.append((name, e))
        width = max(width, len(name))
    for name, e in rows:
        eps = "  n/a" if math.isnan(e.epsilon) else f"{e.epsilon:.3f}"
        lines.append(f"{name:<{width}}  {e.c_or:7.3f} +- {eps}")
    return "\n".join(lines)
