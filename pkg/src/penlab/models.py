"""Histogram partitions of [0, 1) and the model collections built from them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Segment:
    """``bins`` equal-width bins tiling [lo, hi)."""

    lo: float
    hi: float
    bins: int

    def breakpoints(self) -> np.ndarray:
        k = np.arange(self.bins + 1)
        # one rounding per breakpoint: k/(2D) and (D+k)/(2D) come out exact for t = 1/2
        bp = (self.lo * (self.bins - k) + self.hi * k) / self.bins
        bp[0], bp[-1] = self.lo, self.hi
        return bp


@dataclass(frozen=True)
class ModelIndex:
    """A histogram model.

    ``split=None`` means ``d1`` regular bins on [0, 1) (``d1 == 1`` is the
    constant model).  Otherwise ``d1`` bins on [0, split) and ``d2`` bins on
    [split, 1).
    """

    d1: int
    d2: int = 0
    split: float | None = None

    def __post_init__(self):
        if self.d1 < 1:
            raise ValueError("d1 must be >= 1")
        if self.split is None:
            if self.d2 != 0:
                raise ValueError("single-regime models have d2 == 0")
        else:
            if not 0.0 < self.split < 1.0:
                raise ValueError("split must lie in (0, 1)")
            if self.d2 < 1:
                raise ValueError("d2 must be >= 1")

    @classmethod
    def constant(cls) -> "ModelIndex":
        return cls(1)

    @classmethod
    def regular(cls, d: int) -> "ModelIndex":
        return cls(d)

    @classmethod
    def two_regime(cls, d1: int, d2: int, split: float = 0.5) -> "ModelIndex":
        return cls(d1, d2, float(split))

    @property
    def is_constant(self) -> bool:
        return self.split is None and self.d1 == 1

    @property
    def dim(self) -> int:
        return self.d1 + self.d2

    @property
    def coords(self) -> tuple[int, int]:
        """(D1, D2) heatmap coordinates; the constant model maps to (0, 0)."""
        if self.is_constant:
            return (0, 0)
        return (self.d1, self.d2)

    def segments(self) -> tuple[Segment, ...]:
        if self.split is None:
            return (Segment(0.0, 1.0, self.d1),)
        return (Segment(0.0, self.split, self.d1), Segment(self.split, 1.0, self.d2))

    def label(self) -> str:
        if self.is_constant:
            return "const"
        if self.split is None:
            return f"reg{self.d1}"
        if self.split == 0.5:
            return f"({self.d1},{self.d2})"
        return f"({self.d1},{self.d2})@{self.split:g}"

    def tiebreak_key(self) -> tuple:
        return (self.dim, self.d1, 0 if self.is_constant else 1)


@dataclass(frozen=True, eq=False)
class Partition:
    breakpoints: np.ndarray

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        if bp.ndim != 1 or bp.size < 2:
            raise ValueError("a partition needs at least two breakpoints")
        if bp[0] != 0.0 or bp[-1] != 1.0:
            raise ValueError("breakpoints must start at 0 and end at 1")
        if np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)

    @property
    def bin_count(self) -> int:
        return self.breakpoints.size - 1

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @classmethod
    def regular(cls, d: int) -> "Partition":
        return build_partition(ModelIndex.regular(d))

    def __eq__(self, other):
        return isinstance(other, Partition) and np.array_equal(self.breakpoints, other.breakpoints)

    def __hash__(self):
        return hash(self.breakpoints.tobytes())


def build_partition(index: ModelIndex) -> Partition:
    parts = [seg.breakpoints() for seg in index.segments()]
    bp = np.concatenate([parts[0]] + [p[1:] for p in parts[1:]])
    return Partition(bp)


def bin_index(partition: Partition, x):
    """0-based index of the right-open bin containing ``x``."""
    xa = np.asarray(x, dtype=float)
    if np.any((xa < 0.0) | (xa >= 1.0)):
        raise ValueError("x must lie in [0, 1)")
    idx = np.searchsorted(partition.breakpoints, xa, side="right") - 1
    return int(idx) if idx.ndim == 0 else idx


# ----------------------------------------------------------------------------
# Collections
# ----------------------------------------------------------------------------

FAMILIES = ("reg", "reg-half", "reg-t", "reg-var")


@dataclass(frozen=True)
class CollectionSpec:
    family: str = "reg-half"
    maxdim_rule: str | int = "log"
    split: float = 0.5
    # split grid for "reg-var"; None means {k / sqrt(n)}
    splits: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown collection {self.family!r}")
        if isinstance(self.maxdim_rule, str) and self.maxdim_rule not in ("log", "log2"):
            raise ValueError(f"unknown max-dimension rule {self.maxdim_rule!r}")

    def max_dim(self, n: int) -> int:
        if not isinstance(self.maxdim_rule, str):
            m = int(self.maxdim_rule)
        elif self.maxdim_rule == "log":
            m = math.floor(n / math.log(n))
        else:
            m = math.floor(n / math.log(n) ** 2)
        return min(m, n)

    def split_grid(self, n: int) -> tuple[float, ...]:
        if self.splits is not None:
            return tuple(self.splits)
        root = math.sqrt(n)
        return tuple(k / root for k in range(1, math.floor(root - 1) + 1))

    @classmethod
    def parse(cls, collection: str = "reg-half", maxdim: str = "log") -> "CollectionSpec":
        """Parse CLI tokens ``reg|reg-half|reg-t=<t>|reg-var`` and ``log|log2|<int>``."""
        rule: str | int = maxdim if maxdim in ("log", "log2") else int(maxdim)
        if collection.startswith("reg-t="):
            return cls("reg-t", rule, split=float(collection.split("=", 1)[1]))
        return cls(collection, rule)

    @property
    def token(self) -> str:
        if self.family == "reg-t":
            return f"reg-t={self.split:g}"
        return self.family


def enumerate_models(spec: CollectionSpec, n: int) -> list[ModelIndex]:
    if n < 2:
        raise ValueError("need n >= 2")
    m_n = spec.max_dim(n)
    if spec.family == "reg":
        if m_n < 1:
            raise ValueError("empty collection")
        return [ModelIndex.regular(d) for d in range(1, m_n + 1)]
    if m_n < 2:
        raise ValueError(f"empty collection: M_n = {m_n} < 2")
    half = m_n // 2
    if spec.family in ("reg-half", "reg-t"):
        splits = (0.5,) if spec.family == "reg-half" else (spec.split,)
    else:
        splits = spec.split_grid(n)
    out = [ModelIndex.constant()]
    for t in splits:
        out.extend(
            ModelIndex.two_regime(d1, d2, t)
            for d1 in range(1, half + 1)
            for d2 in range(1, half + 1)
        )
    return out


class ModelSet:
    """Models of a collection, with the distinct segments they are built from.

    Every model is a union of one or two segments, and every per-bin quantity
    the procedures need is additive over bins, so per-model values are sums of
    per-segment values.
    """

    def __init__(self, models: list[ModelIndex]):
        self.models = list(models)
        seg_ids: dict[Segment, int] = {}
        rows = []
        for m in self.models:
            ids = []
            for seg in m.segments():
                if seg not in seg_ids:
                    seg_ids[seg] = len(seg_ids)
                ids.append(seg_ids[seg])
            rows.append(ids)
        self.segments = list(seg_ids)
        self.null_segment = len(self.segments)
        self.seg_index = np.full((len(self.models), 2), self.null_segment, dtype=np.intp)
        for i, ids in enumerate(rows):
            self.seg_index[i, : len(ids)] = ids

    def __len__(self):
        return len(self.models)

    @cached_property
    def dims(self) -> np.ndarray:
        return np.array([m.dim for m in self.models])

    @cached_property
    def d1(self) -> np.ndarray:
        return np.array([m.d1 for m in self.models])

    @cached_property
    def d2(self) -> np.ndarray:
        return np.array([m.d2 for m in self.models])

    @cached_property
    def is_constant(self) -> np.ndarray:
        return np.array([m.is_constant for m in self.models])

    def combine(self, per_segment: np.ndarray, null_value=0.0) -> np.ndarray:
        """Per-model sums of a per-segment array (last axis = segments)."""
        arr = np.asarray(per_segment)
        pad = np.full(arr.shape[:-1] + (1,), null_value, dtype=arr.dtype)
        full = np.concatenate([arr, pad], axis=-1)
        return full[..., self.seg_index[:, 0]] + full[..., self.seg_index[:, 1]]
