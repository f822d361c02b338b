"""Command-line runner.

Subcommands: ``value``, ``deriv``, ``oracle``, ``check``, ``convergence`` and
``compare``.  Each run writes ``results.csv`` and ``manifest.json`` into the
output directory; passing the manifest back through ``--config`` repeats the
run.  Exit codes: 0 success, 2 configuration error, 3 acceptance failure
(gated by ``--assert``; ``check`` always gates).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import ORACLES, ConfigError, RunConfig, from_dict, parse_config
from .estimators import EstimatorResult, estimate_all
from .identity_checks import default_suite
from .oracle_analytic import GaussKernelParams, oracle_deriv, oracle_value
from .oracle_pde import PdeGrid, pde_deriv, solve_dirichlet

CSV_COLUMNS = ("estimator", "engine", "n", "M", "mean", "stderr", "oracle", "abs_err", "z", "seconds")
CHECK_COLUMNS = ("identity", "model", "x", "dt", "lhs", "rhs", "residual", "tolerance", "passed")
ORDER_BAND = (0.35, 0.75)
EXIT_OK, EXIT_CONFIG, EXIT_ACCEPT = 0, 2, 3


@dataclass
class Row:
    estimator: str
    engine: str
    n: int
    M: int
    mean: float
    stderr: float
    oracle: float = math.nan
    seconds: float = 0.0

    @property
    def abs_err(self) -> float:
        return abs(self.mean - self.oracle)

    @property
    def z(self) -> float:
        if math.isnan(self.oracle):
            return math.nan
        if self.stderr == 0:
            return 0.0 if self.mean == self.oracle else math.inf
        return (self.mean - self.oracle) / self.stderr

    def as_dict(self) -> dict:
        return {"estimator": self.estimator, "engine": self.engine, "n": self.n, "M": self.M,
                "mean": repr(float(self.mean)), "stderr": repr(float(self.stderr)),
                "oracle": repr(float(self.oracle)), "abs_err": repr(float(self.abs_err)),
                "z": repr(float(self.z)), "seconds": f"{self.seconds:.3f}"}

    def within_gate(self, rel: float) -> bool:
        if math.isnan(self.oracle):
            return True
        return self.abs_err <= 3 * self.stderr + rel * abs(self.oracle)

    @classmethod
    def from_result(cls, r: EstimatorResult, oracle: float) -> "Row":
        engine = r.engine if r.estimator not in ("value", "fd") else "killed"
        return cls(r.estimator, engine, r.steps, r.paths, r.mean, r.stderr, oracle, r.seconds)


# ---------------------------------------------------------------- oracles

def resolve_oracle(cfg: RunConfig) -> str:
    if cfg.oracle != "auto":
        return cfg.oracle
    return "analytic" if cfg.build_model().is_constant else "pde"


def compute_oracle(cfg: RunConfig) -> dict:
    """{'value': float, 'deriv': float, 'method': str}; NaN entries when unavailable."""
    kind = resolve_oracle(cfg)
    m = cfg.build_model()
    f = cfg.build_payoff(m.L)
    if kind == "none":
        return {"value": math.nan, "deriv": math.nan, "method": "none"}
    if kind == "analytic":
        if not m.is_constant:
            raise ConfigError("the analytic oracle needs the constant model; use --oracle pde")
        prm = GaussKernelParams.from_model(m, cfg.T)
        return {"value": oracle_value(f, cfg.x0, prm).value, "deriv": oracle_deriv(f, cfg.x0, prm).value,
                "method": "analytic"}
    grid = PdeGrid.for_problem(m, cfg.T, cfg.x0, cfg.pde_nx, cfg.pde_nt)
    prof = solve_dirichlet(m, f, cfg.T, grid, cfg.x0)
    return {"value": float(prof(cfg.x0)), "deriv": pde_deriv(prof, cfg.x0), "method": "pde"}


# ---------------------------------------------------------------- commands

def _value_rows(cfg, oracle):
    res = estimate_all(cfg.run_spec(), ("value",))
    return [Row.from_result(res["value"], oracle["value"])]


def _deriv_rows(cfg, oracle, names):
    spec = cfg.run_spec()
    f = spec.payoff
    if not f.smooth:
        dropped = [n for n in names if n in ("reflected", "mixed")]
        if dropped and len(dropped) == len(names):
            raise ConfigError(f"estimators {dropped} need a differentiable payoff")
        names = tuple(n for n in names if n not in dropped)
    res = estimate_all(spec, names)
    return [Row.from_result(res[n], oracle["deriv"]) for n in names]


def cmd_value(cfg, args):
    oracle = compute_oracle(cfg)
    return _value_rows(cfg, oracle), {"oracle": oracle}


def cmd_deriv(cfg, args):
    oracle = compute_oracle(cfg)
    return _deriv_rows(cfg, oracle, cfg.selected_estimators()), {"oracle": oracle}


def cmd_compare(cfg, args):
    oracle = compute_oracle(cfg)
    rows = _value_rows(cfg, oracle) + _deriv_rows(cfg, oracle, ("reflected", "mixed", "bel", "fd"))
    return rows, {"oracle": oracle}


def cmd_oracle(cfg, args):
    t0 = time.perf_counter()
    oracle = compute_oracle(cfg)
    secs = time.perf_counter() - t0
    rows = [Row("oracle_value", oracle["method"], cfg.n, 0, oracle["value"], 0.0, oracle["value"], secs),
            Row("oracle_deriv", oracle["method"], cfg.n, 0, oracle["deriv"], 0.0, oracle["deriv"], secs)]
    return rows, {"oracle": oracle}


def fit_order(ns, biases) -> float:
    """Least-squares slope of -log2|bias| against log2 n."""
    ln = np.log2(np.asarray(ns, float))
    lb = np.log2(np.abs(np.asarray(biases, float)))
    return float(-np.polyfit(ln, lb, 1)[0])


def cmd_convergence(cfg, args):
    oracle = compute_oracle(cfg)
    names = cfg.selected_estimators() if args.estimator else ("value",)
    rows = []
    for n in cfg.convergence_n:
        spec = cfg.run_spec(n=n)
        res = estimate_all(spec, names)
        for nm in names:
            rows.append(Row.from_result(res[nm], oracle["value" if nm == "value" else "deriv"]))
    orders = {}
    for nm in names:
        sub = [r for r in rows if r.estimator == nm]
        biases = [r.mean - r.oracle for r in sub]
        pairwise = [math.log2(abs(a) / abs(b)) if a and b else math.nan for a, b in zip(biases, biases[1:])]
        orders[nm] = {"n": [r.n for r in sub], "bias": biases, "stderr": [r.stderr for r in sub],
                      "pairwise_order": pairwise, "fitted_order": fit_order([r.n for r in sub], biases)}
    return rows, {"oracle": oracle, "orders": orders}


def cmd_check(cfg, args):
    t0 = time.perf_counter()
    reports = default_suite()
    return reports, {"seconds": time.perf_counter() - t0, "passed": all(r.passed for r in reports)}


COMMANDS = {"value": cmd_value, "deriv": cmd_deriv, "oracle": cmd_oracle, "check": cmd_check,
            "convergence": cmd_convergence, "compare": cmd_compare}


# ---------------------------------------------------------------- output

def write_csv(path: Path, rows, columns=CSV_COLUMNS) -> None:
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r.as_dict() if isinstance(r, Row) else {k: r.as_row()[k] for k in columns})


def _jsonable(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return repr(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def write_manifest(path: Path, command: str, cfg: RunConfig | None, extra: dict, rows, wall: float) -> None:
    manifest = {
        "tool": "killsens", "version": __version__, "command": command,
        "python": platform.python_version(), "numpy": np.__version__,
        "config": cfg.to_dict() if cfg is not None else None,
        "seed": cfg.seed if cfg is not None else None,
        "config_hash": cfg.run_spec().config_hash() if cfg is not None else None,
        "wall_seconds": wall,
        "wall_times": [{"estimator": r.estimator, "n": r.n, "seconds": r.seconds} for r in rows if isinstance(r, Row)],
        **extra,
    }
    path.write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")


def _gate_failures(command, rows, extra, cfg) -> list[str]:
    if command == "check":
        return [f"{r.identity} at x={r.x}, dt={r.dt}: residual {r.residual:.3g} > {r.tolerance:g}"
                for r in rows if not r.passed]
    if command == "convergence":
        lo, hi = ORDER_BAND
        return [f"{nm}: fitted order {o['fitted_order']:.3f} outside [{lo}, {hi}]"
                for nm, o in extra["orders"].items() if not lo <= o["fitted_order"] <= hi]
    return [f"{r.estimator} ({r.engine}): |{r.mean:.6g} - {r.oracle:.6g}| > 3*{r.stderr:.3g} + {cfg.gate_rel}*|oracle|"
            for r in rows if not r.within_gate(cfg.gate_rel)]


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="killsens", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML config or a JSON manifest of an earlier run")
        p.add_argument("--seed", type=int)
        p.add_argument("--paths", type=int)
        p.add_argument("--steps", type=int)
        p.add_argument("--estimator", help="reflected|mixed|bel|fd|all, comma separated")
        p.add_argument("--engine", type=int, choices=(1, 2))
        p.add_argument("--backend", choices=("direct", "importance"))
        p.add_argument("--oracle", choices=ORACLES)
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int)
        p.add_argument("--strict", action="store_true", default=None, help="fixed-order reduction")
        p.add_argument("--assert", dest="assert_", action="store_true",
                       help="exit 3 when an acceptance gate fails (always on for check)")
    return parser


def _load(args) -> RunConfig | None:
    if args.config is None:
        if args.command == "check":
            return None
        raise ConfigError("--config is required for this subcommand")
    cfg = parse_config(args.config)
    est = tuple(e.strip() for e in args.estimator.split(",")) if args.estimator else None
    overrides = dict(seed=args.seed, paths=args.paths, n=args.steps, estimators=est, engine=args.engine,
                     backend=args.backend, oracle=args.oracle, out=args.out, threads=args.threads,
                     strict=args.strict)
    cfg = cfg.with_overrides(**overrides)
    return from_dict(cfg.to_dict())  # re-validate the merged result


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
        out = Path(args.out or (cfg.out if cfg else "results"))
        t0 = time.perf_counter()
        rows, extra = COMMANDS[args.command](cfg, args)
        wall = time.perf_counter() - t0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "results.csv", rows, CHECK_COLUMNS if args.command == "check" else CSV_COLUMNS)
    write_manifest(out / "manifest.json", args.command, cfg, extra, rows, wall)
    for r in rows:
        if isinstance(r, Row):
            print(f"{r.estimator:>12} {r.engine:>8} n={r.n:<5} M={r.M:<8} mean={r.mean:.6f} "
                  f"se={r.stderr:.2e} oracle={r.oracle:.6f} z={r.z:+.2f}")
    if args.command == "check":
        print(f"{sum(r.passed for r in rows)}/{len(rows)} identities pass")
    if args.command == "convergence":
        for nm, o in extra["orders"].items():
            print(f"{nm}: fitted order {o['fitted_order']:.3f}")
    if args.assert_ or args.command == "check":
        failures = _gate_failures(args.command, rows, extra, cfg)
        for msg in failures:
            print(f"FAIL {msg}", file=sys.stderr)
        if failures:
            return EXIT_ACCEPT
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
