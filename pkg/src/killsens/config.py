"""Run configuration: TOML in, validated dataclass out, and back.

A minimal file names the model, the payoff, the start point and the horizon::

    model = "constant"
    payoff = "expm"
    x0 = 0.5
    T = 1.0

Everything else has a default (n = 256 steps, 100000 paths, seed 0).  Model
and payoff may instead be tables carrying their parameters::

    [model]
    name = "tanh-drift"
    beta = 0.5

Unknown keys anywhere are rejected.  ``dump``/``loads`` form a fixpoint: the
serialized form of a parsed config parses to the same config.
"""
from __future__ import annotations

import json
import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import tomli_w

from .estimators import ALIASES, ESTIMATORS, RunSpec
from .model import MODEL_DEFAULTS, PAYOFF_DEFAULTS, CoefficientModel, TestFunction, TimeGrid
from .sampling import BACKENDS, SURVIVAL_MODES

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

ORACLES = ("auto", "analytic", "pde", "none")
BEL_STARTS = ("bridge", "grid")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


@dataclass(frozen=True)
class RunConfig:
    model: str
    payoff: str
    x0: float
    T: float
    model_params: dict = field(default_factory=dict)
    payoff_params: dict = field(default_factory=dict)
    n: int = 256
    paths: int = 100_000
    seed: int = 0
    engine: int = 2
    backend: str = "direct"
    survival: str = "conditional"
    estimators: tuple = ("all",)
    bel_start: str = "bridge"
    fd_h: float | None = None
    oracle: str = "auto"
    pde_nx: int = 4000
    pde_nt: int = 4000
    gate_rel: float = 0.02
    convergence_n: tuple = (64, 128, 256, 512)
    out: str = "results"
    threads: int = 1
    strict: bool = False
    chunk: int = 1 << 15

    def __post_init__(self):
        try:
            self._validate()
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def _validate(self):
        if self.model not in MODEL_DEFAULTS:
            raise ConfigError(f"unknown model {self.model!r}; known: {sorted(MODEL_DEFAULTS)}")
        if self.payoff not in PAYOFF_DEFAULTS:
            raise ConfigError(f"unknown payoff {self.payoff!r}; known: {sorted(PAYOFF_DEFAULTS)}")
        m = self.build_model()
        self.build_payoff(m.L)
        if self.x0 < m.L:
            raise ConfigError(f"x0 = {self.x0} violates the domain constraint x0 >= L = {m.L}")
        TimeGrid(self.T, self.n)
        if self.paths < 1:
            raise ConfigError("paths must be >= 1")
        if self.engine not in (1, 2):
            raise ConfigError("engine must be 1 or 2")
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {BACKENDS}")
        if self.survival not in SURVIVAL_MODES:
            raise ConfigError(f"survival must be one of {sorted(SURVIVAL_MODES)}")
        if self.bel_start not in BEL_STARTS:
            raise ConfigError(f"bel_start must be one of {BEL_STARTS}")
        if self.oracle not in ORACLES:
            raise ConfigError(f"oracle must be one of {ORACLES}")
        for e in self.estimators:
            if e != "all" and ALIASES.get(e, e) not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {e!r}; known: {ESTIMATORS + ('all',)}")
        ns = list(self.convergence_n)
        if not ns or any(b <= a for a, b in zip(ns, ns[1:])) or ns[0] < 1:
            raise ConfigError("convergence n values must be positive and strictly increasing")
        if self.threads < 1 or self.chunk < 1:
            raise ConfigError("threads and chunk must be >= 1")

    # ------------------------------------------------------------ builders
    def build_model(self) -> CoefficientModel:
        return CoefficientModel(self.model, dict(self.model_params))

    def build_payoff(self, L: float | None = None) -> TestFunction:
        L = self.build_model().L if L is None else L
        return TestFunction(self.payoff, L, dict(self.payoff_params))

    def selected_estimators(self) -> tuple:
        if "all" in self.estimators:
            return ("reflected", "mixed", "bel", "fd")
        return tuple(ALIASES.get(e, e) for e in self.estimators)

    def run_spec(self, n: int | None = None, **changes) -> RunSpec:
        m = self.build_model()
        spec = RunSpec(m, self.build_payoff(m.L), float(self.x0), TimeGrid(self.T, self.n if n is None else n),
                       paths=self.paths, seed=self.seed, engine=self.engine, backend=self.backend,
                       survival=self.survival, fd_h=self.fd_h, threads=self.threads, strict=self.strict,
                       chunk=self.chunk, bel_start=self.bel_start)
        return spec.replace(**changes) if changes else spec

    def with_overrides(self, **kw) -> "RunConfig":
        kw = {k: v for k, v in kw.items() if v is not None}
        return replace(self, **kw) if kw else self

    # ------------------------------------------------------------ serialization
    def to_dict(self) -> dict:
        """Nested form used by TOML and manifests; None-valued optionals are omitted."""
        d = asdict(self)
        run = {k: d[k] for k in ("x0", "T", "n", "paths", "seed", "engine", "backend", "survival",
                                 "bel_start", "threads", "strict", "chunk")}
        run["estimators"] = list(self.estimators)
        if self.fd_h is not None:
            run["fd_h"] = self.fd_h
        return {
            "model": {"name": self.model, **self.model_params},
            "payoff": {"name": self.payoff, **self.payoff_params},
            "run": run,
            "oracle": {"kind": self.oracle, "pde_nx": self.pde_nx, "pde_nt": self.pde_nt,
                       "gate_rel": self.gate_rel},
            "convergence": {"n": list(self.convergence_n)},
            "output": {"dir": self.out},
        }


_SECTIONS = {
    "run": {"x0", "T", "n", "paths", "seed", "engine", "backend", "survival", "bel_start", "threads",
            "strict", "chunk", "estimators", "fd_h"},
    "oracle": {"kind", "pde_nx", "pde_nt", "gate_rel"},
    "convergence": {"n"},
    "output": {"dir"},
}
_TOP_SHORTHAND = {"x0", "T", "n", "paths", "seed"}
_RENAME = {("oracle", "kind"): "oracle", ("oracle", "pde_nx"): "pde_nx", ("oracle", "pde_nt"): "pde_nt",
           ("oracle", "gate_rel"): "gate_rel", ("convergence", "n"): "convergence_n", ("output", "dir"): "out"}


def _component(raw, what: str, defaults: dict) -> tuple[str, dict]:
    if isinstance(raw, str):
        return raw, {}
    if not isinstance(raw, dict) or "name" not in raw:
        raise ConfigError(f"{what} must be a name or a table with a 'name' key")
    params = {k: v for k, v in raw.items() if k != "name"}
    name = raw["name"]
    if name in defaults:
        unknown = set(params) - set(defaults[name]) - ({"L"} if what == "payoff" else set())
        if unknown:
            raise ConfigError(f"unknown key(s) in [{what}]: {', '.join(sorted(unknown))}")
    if what == "payoff" and "L" in params:
        raise ConfigError("the payoff inherits L from the model; remove 'L' from [payoff]")
    return name, params


def from_dict(data: dict) -> RunConfig:
    data = dict(data)
    kwargs: dict = {}
    for key in ("model", "payoff"):
        if key not in data:
            raise ConfigError(f"missing required key {key!r}")
        name, params = _component(data.pop(key), key, MODEL_DEFAULTS if key == "model" else PAYOFF_DEFAULTS)
        kwargs[key] = name
        kwargs[f"{key}_params"] = params
    for key in list(data):
        if key in _TOP_SHORTHAND:
            kwargs[key] = data.pop(key)
    for section, allowed in _SECTIONS.items():
        body = data.pop(section, {})
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        unknown = set(body) - allowed
        if unknown:
            raise ConfigError(f"unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
        for k, v in body.items():
            target = _RENAME.get((section, k), k)
            if target in kwargs:
                raise ConfigError(f"{k!r} given twice")
            kwargs[target] = v
    if data:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(data))}")
    for req in ("x0", "T"):
        if req not in kwargs:
            raise ConfigError(f"missing required key {req!r}")
    for key in ("estimators", "convergence_n"):
        if key in kwargs:
            v = kwargs[key]
            kwargs[key] = tuple([v] if isinstance(v, (str, int)) else v)
    for key in ("x0", "T", "fd_h", "gate_rel"):
        if key in kwargs and kwargs[key] is not None:
            kwargs[key] = float(kwargs[key])
    try:
        return RunConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def loads(text: str) -> RunConfig:
    try:
        return from_dict(tomllib.loads(text))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML: {exc}") from exc


def dumps(cfg: RunConfig) -> str:
    return tomli_w.dumps(cfg.to_dict())


def parse_config(path) -> RunConfig:
    """Read a TOML config, or the ``config`` block of a JSON run manifest."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    if path.suffix == ".json":
        try:
            manifest = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid manifest JSON: {exc}") from exc
        if "config" not in manifest:
            raise ConfigError("manifest has no 'config' block")
        return from_dict(manifest["config"])
    return loads(path.read_text())


CONFIG_FIELDS = tuple(f.name for f in fields(RunConfig))
