"""Monte Carlo estimators of the killed semigroup and its spatial derivative.

Estimator ids
-------------
``value``      f(X_n) times the survival weight of the killed Euler chain.
``reflected``  f'(terminal) times the reflected-process weight (est_A).
``mixed``      flow weight plus a boundary term at the last crossing (est_B, engine 1).
``bel``        Bismut-Elworthy-Li weight over the last excursion (est_C); needs only f.
``fd``         central difference of ``value`` with common random numbers.

Auxiliary ids used by the checks: ``survival``, ``free`` (unkilled Euler
value), ``terminal`` (weighted f at the engine's terminal state) and
``weight`` (mean of the importance-backend weight, which is 1 in expectation).

Paths are processed in chunks; every chunk yields per-column (count, mean,
M2) triples that are merged with the pairwise update of Chan et al.  Chunk
boundaries depend only on ``RunSpec.chunk``, so the result is a function of
the run spec; ``strict`` additionally pins the merge order when threads are used.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import CoefficientModel, TestFunction, TimeGrid, payoff_deriv, payoff_value
from .rng import uniforms
from .sampling import BACKENDS, SURVIVAL_MODES, engine1_step, engine2_step, killed_step, step_gauss
from .weights import step_e, step_kappa, step_psi

ESTIMATORS = ("value", "reflected", "mixed", "bel", "fd")
AUXILIARY = ("survival", "free", "terminal", "weight")
ALIASES = {"est_A": "reflected", "est_B": "mixed", "est_C": "bel", "est_FD": "fd"}
DEFAULT_CHUNK = 1 << 15


# ---------------------------------------------------------------- aggregation

@dataclass
class RunningStats:
    """Streaming count / mean / sum of squared deviations."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def from_samples(cls, samples) -> "RunningStats":
        x = np.asarray(samples, dtype=np.float64).ravel()
        if x.size == 0:
            return cls()
        m = float(np.mean(x))
        return cls(int(x.size), m, float(np.sum((x - m) ** 2)))

    def update(self, samples) -> "RunningStats":
        self.merge(RunningStats.from_samples(samples))
        return self

    def merge(self, other: "RunningStats") -> "RunningStats":
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / n
        self.m2 += other.m2 + delta * delta * self.count * other.count / n
        self.count = n
        return self

    @property
    def variance(self) -> float:
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.count) if self.count else 0.0


def aggregate(samples, chunk: int | None = None) -> tuple[float, float]:
    """(mean, stderr) of a sample stream; ``samples`` may be an array or an iterable of batches."""
    st = RunningStats()
    if isinstance(samples, np.ndarray) or np.isscalar(samples):
        arr = np.atleast_1d(np.asarray(samples, dtype=np.float64)).ravel()
        step = chunk or max(arr.size, 1)
        for s in range(0, arr.size, step):
            st.update(arr[s:s + step])
    else:
        for batch in samples:
            st.update(batch)
    if st.count == 0:
        raise ValueError("aggregate needs at least one sample")
    return st.mean, st.stderr


# ---------------------------------------------------------------- specs

@dataclass(frozen=True)
class RunSpec:
    """Everything that determines an estimate, bit for bit (``threads`` aside)."""

    model: CoefficientModel
    payoff: TestFunction
    x0: float
    grid: TimeGrid
    paths: int = 100_000
    seed: int = 0
    engine: int = 2
    backend: str = "direct"
    survival: str = "conditional"
    fd_h: float | None = None
    threads: int = 1
    strict: bool = True
    chunk: int = DEFAULT_CHUNK
    bel_start: str = "bridge"

    def __post_init__(self):
        if self.x0 < self.model.L:
            raise ValueError(f"x0 = {self.x0} must satisfy x0 >= L = {self.model.L}")
        if self.paths < 1:
            raise ValueError("paths must be at least 1")
        if self.engine not in (1, 2):
            raise ValueError("engine must be 1 or 2")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}")
        if self.survival not in SURVIVAL_MODES:
            raise ValueError(f"survival must be one of {sorted(SURVIVAL_MODES)}")
        if self.payoff.L != self.model.L:
            raise ValueError("payoff and model disagree on the boundary L")
        if self.fd_h is not None and not self.fd_h > 0:
            raise ValueError("fd_h must be positive")
        if self.chunk < 1 or self.threads < 1:
            raise ValueError("chunk and threads must be positive")
        if self.bel_start not in ("grid", "bridge"):
            raise ValueError("bel_start must be 'grid' or 'bridge'")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def h(self) -> float:
        return self.fd_h if self.fd_h is not None else 0.05 * max(1.0, abs(self.x0 - self.model.L))

    def replace(self, **changes) -> "RunSpec":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(), "payoff": self.payoff.to_dict(), "L": self.model.L,
            "x0": self.x0, "T": self.grid.T, "n": self.grid.n, "paths": self.paths,
            "seed": self.seed, "engine": self.engine, "backend": self.backend,
            "survival": self.survival, "fd_h": self.h, "chunk": self.chunk,
            "bel_start": self.bel_start,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class EstimatorResult:
    estimator: str
    mean: float
    stderr: float
    paths: int
    steps: int
    engine: str
    seconds: float
    config_hash: str

    def z_score(self, reference: float) -> float:
        diff = self.mean - reference
        if self.stderr == 0:
            return 0.0 if diff == 0 else math.copysign(math.inf, diff)
        return diff / self.stderr


def combined_stderr(*results: EstimatorResult) -> float:
    return math.sqrt(sum(r.stderr ** 2 for r in results))


# ---------------------------------------------------------------- batch kernels

@njit(cache=True, nogil=True)
def _batch_engine1(kind, prm, fkind, fprm, smooth, x0, dt, n, seed, start, direct, boaL, bridge, out):
    # columns: f*w, est_A, est_B, est_C, w
    L = prm[0]
    sq = math.sqrt(dt)
    T = n * dt
    # B only enters through b: with b = 0 everywhere the regulator is dead weight
    with_reg = not (kind == 0 and prm[1] == 0.0)
    for j in range(out.shape[0]):
        path = start + j
        x = x0
        E = 1.0
        logK = 0.0
        B = 0.0
        G = 0.0
        snap = 0.0
        crossed = False
        S = 0.0
        w = 1.0
        e2B = 1.0
        g2 = 0.0
        for i in range(1, n + 1):
            g, g2 = step_gauss(seed, path, i, g2)
            y, z, dw, fl, p, dreg, alive, b, db, s, ds = engine1_step(kind, prm, dt, seed, path, i, x, g, direct,
                                                                      with_reg)
            if fl:
                snap = E
                crossed = True
                # the excursion starts at the in-step crossing, from L to y
                S = (y - L) / s * E * e2B if bridge else 0.0
            else:
                S += dw / s * E * e2B
            E *= step_e(db - ds * b / s, ds, dt, z, fl, (x - L) / (s * sq))
            logK += step_kappa(b, s, z, dt)
            G += b / (s * s) * dreg
            if dreg != 0.0:
                B += dreg
                if boaL != 0.0:
                    e2B = math.exp(2.0 * boaL * B)
            if not direct:
                if not alive:
                    w = 0.0
                    break
                if fl:
                    w *= 2.0
            x = y
        if w == 0.0:
            for c in range(out.shape[1]):
                out[j, c] = 0.0
            continue
        fx = payoff_value(fkind, fprm, x)
        K = math.exp(logK)
        out[j, 0] = fx * w
        if smooth:
            fp = payoff_deriv(fkind, fprm, x)
            out[j, 1] = fp * E * K * math.exp(boaL * B) * w
            out[j, 2] = (fp * E * K + (boaL * fx * K * snap if crossed else 0.0)) * w
        else:
            out[j, 1] = math.nan
            out[j, 2] = math.nan
        out[j, 3] = fx * math.exp(logK - G) * S / T * w if T > 0 else 0.0
        out[j, 4] = w


@njit(cache=True, nogil=True)
def _batch_engine2(kind, prm, fkind, fprm, smooth, x0, dt, n, seed, start, boaL, bridge, out):
    # columns: f(Y_n), est_A, est_C
    L = prm[0]
    T = n * dt
    for j in range(out.shape[0]):
        path = start + j
        y = x0
        logPsi = 0.0
        Psi = 1.0
        S = 0.0
        g2 = 0.0
        for i in range(1, n + 1):
            g, g2 = step_gauss(seed, path, i, g2)
            yn, z, dw, fl, p, dreg, b, db, s, ds = engine2_step(kind, prm, dt, seed, path, i, y, g)
            if fl:
                S = (yn - L) / s * Psi if bridge else 0.0
            else:
                S += dw / s * Psi
            inc = step_psi(db, ds, dw, dreg, 2.0 * boaL, dt)
            if inc != 0.0:
                logPsi += inc
                Psi = math.exp(logPsi)
            y = yn
        fy = payoff_value(fkind, fprm, y)
        out[j, 0] = fy
        out[j, 1] = payoff_deriv(fkind, fprm, y) * math.exp(logPsi) if smooth else math.nan
        out[j, 2] = fy * S / T if T > 0 else 0.0


@njit(cache=True, nogil=True)
def _batch_killed(kind, prm, fkind, fprm, starts, fd_coef, free, dt, n, seed, start, mode, out):
    # columns: f*surv at starts[0], surv at starts[0], sum_k fd_coef[k] f*surv at starts[k], unkilled f
    L = prm[0]
    m = starts.shape[0]
    x = np.empty(m)
    surv = np.empty(m)
    for j in range(out.shape[0]):
        path = start + j
        for k in range(m):
            x[k] = starts[k]
            surv[k] = 1.0 if starts[k] > L else 0.0
        xf = starts[0]
        g2 = 0.0
        for i in range(1, n + 1):
            alive = False
            for k in range(m):
                if surv[k] != 0.0:
                    alive = True
                    break
            if not alive and not free:
                break
            g, g2 = step_gauss(seed, path, i, g2)
            if free:
                xf = killed_step(kind, prm, dt, xf, g)[0]
            fu = -1.0
            for k in range(m):
                if surv[k] == 0.0:
                    continue
                y, p = killed_step(kind, prm, dt, x[k], g)
                if y <= L:
                    surv[k] = 0.0
                elif mode == 0:
                    if p > 0.0:
                        if fu < 0.0:
                            fu = uniforms(seed, path, i)[0]
                        if fu < p:
                            surv[k] = 0.0
                elif mode == 1:
                    surv[k] *= 1.0 - p
                x[k] = y
        v0 = payoff_value(fkind, fprm, x[0]) * surv[0] if surv[0] != 0.0 else 0.0
        out[j, 0] = v0
        out[j, 1] = surv[0]
        acc = 0.0
        for k in range(m):
            if fd_coef[k] != 0.0 and surv[k] != 0.0:
                acc += fd_coef[k] * (payoff_value(fkind, fprm, x[k]) * surv[k])
        out[j, 2] = acc
        out[j, 3] = payoff_value(fkind, fprm, xf) if free else 0.0


# ---------------------------------------------------------------- passes

_PASS_COLUMNS = {
    "engine1": {"terminal": 0, "reflected": 1, "mixed": 2, "bel": 3, "weight": 4},
    "engine2": {"terminal": 0, "reflected": 1, "bel": 2},
    "killed": {"value": 0, "survival": 1, "fd": 2, "free": 3},
}


def fd_stencil(spec: RunSpec) -> tuple[np.ndarray, np.ndarray]:
    """Starting points and weights of the finite-difference baseline.

    Central (x0-h, x0+h) when x0-h stays in the domain, otherwise the
    second-order forward stencil on (x0, x0+h, x0+2h).
    """
    x0, h = spec.x0, spec.h
    if x0 - h >= spec.model.L:
        return np.array([x0, x0 + h, x0 - h]), np.array([0.0, 0.5 / h, -0.5 / h])
    return np.array([x0, x0 + h, x0 + 2 * h]), np.array([-1.5 / h, 2.0 / h, -0.5 / h])


def _kernel_for(spec: RunSpec, which: str, with_fd: bool, with_free: bool):
    m, f, g = spec.model, spec.payoff, spec.grid
    dt, n, seed, x0 = g.dt, g.n, spec.seed, float(spec.x0)
    boaL = m.boundary_boa()
    if which == "engine1":
        direct = spec.backend == "direct"
        return 5, lambda s, out: _batch_engine1(m.kind, m.prm, f.kind, f.prm, f.smooth, x0, dt, n, seed, s,
                                                direct, boaL, spec.bel_start == "bridge", out)
    if which == "engine2":
        return 3, lambda s, out: _batch_engine2(m.kind, m.prm, f.kind, f.prm, f.smooth, x0, dt, n, seed, s,
                                                boaL, spec.bel_start == "bridge", out)
    if with_fd:
        starts, coef = fd_stencil(spec)
    else:
        starts, coef = np.array([x0]), np.zeros(1)
    mode = SURVIVAL_MODES["conditional"] if with_fd else SURVIVAL_MODES[spec.survival]
    return 4, lambda s, out: _batch_killed(m.kind, m.prm, f.kind, f.prm, starts, coef, with_free, dt, n, seed, s,
                                           mode, out)


def run_pass(spec: RunSpec, which: str, with_fd: bool = False, with_free: bool = False
             ) -> tuple[list[RunningStats], float]:
    """Run one path engine over all paths; returns per-column stats and wall time.

    ``with_fd`` switches the killed pass to the conditional survival mode the
    finite-difference baseline relies on.
    """
    ncols, kernel = _kernel_for(spec, which, with_fd, with_free)
    starts = list(range(0, spec.paths, spec.chunk))

    def work(s):
        out = np.empty((min(spec.chunk, spec.paths - s), ncols))
        kernel(s, out)
        return [RunningStats.from_samples(out[:, c]) for c in range(ncols)]

    t0 = time.perf_counter()
    total = [RunningStats() for _ in range(ncols)]
    if spec.threads <= 1 or len(starts) == 1:
        parts = map(work, starts)
    else:
        pool = ThreadPoolExecutor(spec.threads)
        if spec.strict:
            parts = pool.map(work, starts)
        else:
            parts = (fut.result() for fut in as_completed([pool.submit(work, s) for s in starts]))
    try:
        for part in parts:
            for acc, st in zip(total, part):
                acc.merge(st)
    finally:
        if spec.threads > 1 and len(starts) > 1:
            pool.shutdown()
    return total, time.perf_counter() - t0


def _resolve(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in ESTIMATORS + AUXILIARY:
        raise ValueError(f"unknown estimator {name!r}")
    return name


def _pass_of(name: str, spec: RunSpec) -> str:
    if name in _PASS_COLUMNS["killed"]:
        return "killed"
    if name in ("mixed", "weight"):
        return "engine1"
    return f"engine{spec.engine}"


def _check_requirements(name: str, spec: RunSpec):
    if name in ("reflected", "mixed") and not spec.payoff.smooth:
        raise ValueError(f"estimator {name!r} needs a differentiable payoff; {spec.payoff.name!r} is only measurable")


def estimate_all(spec: RunSpec, estimators=ESTIMATORS) -> dict[str, EstimatorResult]:
    """Run the requested estimators, sharing one pass per engine."""
    names = [_resolve(e) for e in estimators]
    for nm in names:
        _check_requirements(nm, spec)
    groups: dict[str, list[str]] = {}
    for nm in names:
        groups.setdefault(_pass_of(nm, spec), []).append(nm)
    digest = spec.config_hash()
    results = {}
    for which, members in groups.items():
        stats, secs = run_pass(spec, which, with_fd="fd" in members, with_free="free" in members)
        if which == "killed" and "fd" in members and spec.survival != "conditional":
            # fd forces conditional survival; the other killed columns keep the requested mode
            others = [nm for nm in members if nm != "fd"]
            if others:
                st2, s2 = run_pass(spec, which, with_fd=False, with_free="free" in members)
                for nm in others:
                    stats[_PASS_COLUMNS[which][nm]] = st2[_PASS_COLUMNS[which][nm]]
                secs += s2
        for nm in members:
            st = stats[_PASS_COLUMNS[which][nm]]
            results[nm] = EstimatorResult(nm, st.mean, st.stderr, st.count, spec.grid.n, which, secs, digest)
    return {nm: results[nm] for nm in names}


def _single(spec: RunSpec, name: str) -> EstimatorResult:
    return estimate_all(spec, (name,))[name]


def estimate_value(spec: RunSpec) -> EstimatorResult:
    """Killed Euler estimate of P_T f(x0) with the survival mode of the run spec."""
    return _single(spec, "value")


def estimate_deriv_reflected(spec: RunSpec) -> EstimatorResult:
    """est_A on the engine selected by the run spec."""
    return _single(spec, "reflected")


def estimate_deriv_mixed(spec: RunSpec) -> EstimatorResult:
    """est_B; always runs engine 1."""
    return _single(spec, "mixed")


def estimate_deriv_bel(spec: RunSpec) -> EstimatorResult:
    """est_C on the engine selected by the run spec (engine 2 is the reference)."""
    return _single(spec, "bel")


def estimate_deriv_fd(spec: RunSpec) -> EstimatorResult:
    return _single(spec, "fd")
