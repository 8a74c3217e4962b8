"""Experiment configuration and its TOML form.

A config names one of the built-in experiments, or describes a scenario::

    experiment = "X1-005"          # or omit and give a [scenario] table
    replications = 1000
    seed = 12345
    collection = "reg-half"        # reg | reg-half | reg-t=<t> | reg-var
    maxdim = "log"                 # log | log2 | <int>; default from the experiment
    procedures = ["all"]
    c_ov = [1, 1.25, 2, 3, 4]

    [scenario]
    n = 200
    mu = 0.5
    noise = "gaussian"             # or "truncated-gaussian"
    s = "linear"                   # a shape name, or {breaks = [...], pieces = ["expr", ...]}
    sigma = [1.0, 0.05]            # levels on [0, 1/2] and (1/2, 1], or {breaks, levels}

Expressions are in the variable ``x`` and parsed with sympy.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from ..models import CollectionSpec
from ..scenario import (
    EXPERIMENTS,
    SHAPES,
    Piecewise,
    RegressionScenario,
    ScenarioError,
    make_scenario,
)
from .engine import DEFAULT_COV, parse_procedures


class ConfigError(ValueError):
    pass


def _expr_piece(text: str):
    import sympy

    x = sympy.Symbol("x", real=True)
    try:
        expr = sympy.sympify(text, locals={"x": x})
    except (sympy.SympifyError, TypeError) as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc}") from exc
    extra = expr.free_symbols - {x}
    if extra:
        raise ConfigError(f"expression {text!r} uses unknown symbols {sorted(map(str, extra))}")
    fn = sympy.lambdify(x, expr, "numpy")
    dfn = sympy.lambdify(x, sympy.diff(expr, x), "numpy")

    def value(t, fn=fn):
        import numpy as np

        return np.broadcast_to(np.asarray(fn(t), dtype=float), np.shape(t)).copy()

    def deriv(t, fn=dfn):
        import numpy as np

        return np.broadcast_to(np.asarray(fn(t), dtype=float), np.shape(t)).copy()

    return value, deriv


def parse_function(spec) -> Piecewise:
    """A regression function from a shape name, an expression, or ``{breaks, pieces}``."""
    if isinstance(spec, str):
        if spec in SHAPES:
            return SHAPES[spec]()
        spec = {"breaks": [], "pieces": [spec]}
    if not isinstance(spec, dict) or "pieces" not in spec:
        raise ConfigError(f"cannot read regression function from {spec!r}")
    pairs = [_expr_piece(str(p)) for p in spec["pieces"]]
    breaks = tuple(float(b) for b in spec.get("breaks", []))
    try:
        return Piecewise(breaks, tuple(p[0] for p in pairs), tuple(p[1] for p in pairs),
                         label=" | ".join(map(str, spec["pieces"])))
    except ScenarioError as exc:
        raise ConfigError(str(exc)) from exc


def parse_noise_level(spec) -> Piecewise:
    """Piecewise-constant noise level from a number, a level list split at 1/2, or ``{breaks, levels}``."""
    if isinstance(spec, (int, float)):
        return Piecewise.constant(float(spec))
    if isinstance(spec, list):
        if len(spec) == 1:
            return Piecewise.constant(float(spec[0]))
        if len(spec) != 2:
            raise ConfigError("a bare level list must hold the two levels on [0, 1/2] and (1/2, 1]")
        return Piecewise.steps([0.5], [float(v) for v in spec])
    if isinstance(spec, dict) and "levels" in spec:
        return Piecewise.steps([float(b) for b in spec.get("breaks", [])], [float(v) for v in spec["levels"]])
    raise ConfigError(f"cannot read noise level from {spec!r}")


@dataclass
class ExperimentConfig:
    scenario: RegressionScenario
    collection: CollectionSpec
    replications: int = 1000
    seed: int = 0
    procedures: tuple[str, ...] = ("all",)
    c_ov: tuple[float, ...] = DEFAULT_COV
    threads: int = 1
    out_dir: Path | None = None
    sweep_n: tuple[int, ...] = ()
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if any(c < 0 for c in self.c_ov):
            raise ConfigError("overpenalization factors must be >= 0")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        parse_procedures(self.procedures, self.c_ov)

    def echo(self) -> dict:
        """Plain-data view written to the manifest."""
        return {
            "scenario": self.scenario.name,
            "n": self.scenario.n,
            "mu": self.scenario.mu,
            "noise": self.scenario.noise,
            "collection": self.collection.token,
            "maxdim": self.collection.maxdim_rule,
            "replications": self.replications,
            "seed": self.seed,
            "procedures": list(self.procedures),
            "c_ov": list(self.c_ov),
            "sweep_n": list(self.sweep_n),
            "source": self.source,
        }

    def with_n(self, n: int) -> "ExperimentConfig":
        return replace(self, scenario=self.scenario.with_n(n), sweep_n=())


def build_scenario(raw: dict) -> RegressionScenario:
    table = dict(raw.get("scenario", {}))
    name = raw.get("experiment")
    try:
        if name is not None:
            if name not in EXPERIMENTS:
                raise ConfigError(f"unknown experiment {name!r}; expected one of {sorted(EXPERIMENTS)}")
            base = make_scenario(name)
        else:
            if "s" not in table or "sigma" not in table:
                raise ConfigError("a custom scenario needs both 's' and 'sigma'")
            base = RegressionScenario(
                table.get("name", "custom"),
                parse_function(table["s"]),
                parse_noise_level(table["sigma"]),
            )
        overrides = {}
        if "s" in table and name is not None:
            overrides["s"] = parse_function(table["s"])
        if "sigma" in table and name is not None:
            overrides["sigma"] = parse_noise_level(table["sigma"])
        for key in ("n", "mu", "noise", "noise_bound", "sigma_max"):
            if key in table:
                overrides[key] = table[key]
        if "n" in overrides:
            overrides["n"] = int(overrides["n"])
        return replace(base, **overrides) if overrides else base
    except ScenarioError as exc:
        raise ConfigError(str(exc)) from exc


def config_from_dict(raw: dict) -> ExperimentConfig:
    scenario = build_scenario(raw)
    maxdim = raw.get("maxdim", scenario.maxdim_rule)
    try:
        collection = CollectionSpec.parse(str(raw.get("collection", "reg-half")), str(maxdim))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    procs = raw.get("procedures", ["all"])
    if isinstance(procs, str):
        procs = [p for p in procs.split(",")]
    out = raw.get("out")
    return ExperimentConfig(
        scenario=scenario,
        collection=collection,
        replications=int(raw.get("replications", 1000)),
        seed=int(raw.get("seed", 0)),
        procedures=tuple(procs),
        c_ov=tuple(float(c) for c in raw.get("c_ov", DEFAULT_COV)),
        threads=int(raw.get("threads", 1)),
        out_dir=Path(out) if out else None,
        sweep_n=tuple(int(v) for v in raw.get("sweep_n", ())),
        source=raw,
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(raw)


def parse_sweep(text: str) -> tuple[int, ...]:
    """``n=100,200,500`` -> (100, 200, 500)."""
    key, _, values = text.partition("=")
    if key.strip() != "n" or not values:
        raise ConfigError(f"sweep must look like n=<list>, got {text!r}")
    out = tuple(int(v) for v in values.split(","))
    if any(v < 2 for v in out):
        raise ConfigError("sweep sample sizes must be >= 2")
    return out
