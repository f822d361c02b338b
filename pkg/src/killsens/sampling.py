"""Path engines.

* engine 1 -- the driftless Euler chain under the reflected measure.  The
  ``direct`` backend samples the reflected Gaussian kernel and draws the
  crossing flag with probability 2p/(1+p); the ``importance`` backend runs the
  plain driftless chain and carries the weight prod(1_{X_i>L}(1 + flag_i)).
* engine 2 -- the symmetrized reflected Euler scheme with drift.
* killed -- the Euler scheme with drift, killed on exit with bridge-corrected
  crossing probabilities.

The ``*_step`` kernels are shared by the single-path recorders below and by
the batch kernels in :mod:`killsens.estimators`, so a recorded path is
bitwise the path a batch run sees for the same index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from .model import CoefficientModel, TimeGrid, coeffs
from .rng import RngStream, gauss_pair, uniforms
from .weights import regulator_increment

# below 2^-54 the probability is invisible to both uses: 1 - p rounds to 1 and
# a 53-bit uniform falls below it only when it is exactly 0
_LOG_FLOOR = -54.0 * math.log(2.0)

SURVIVAL_MODES = {"bernoulli": 0, "conditional": 1, "discrete": 2}
BACKENDS = ("direct", "importance")


@njit(cache=True, nogil=True)
def log_crossing_prob(x_prev, x_next, a_prev, dt, L):
    if x_prev <= L or x_next <= L:
        return 0.0
    return min(-2.0 * (x_prev - L) * (x_next - L) / (a_prev * dt), 0.0)


@njit(cache=True, nogil=True)
def crossing_prob(x_prev, x_next, a_prev, dt, L):
    """Probability that the Brownian bridge between two Euler points touches L."""
    e = log_crossing_prob(x_prev, x_next, a_prev, dt, L)
    if e < _LOG_FLOOR:
        return 0.0
    return math.exp(e)


@njit(cache=True, nogil=True)
def reflected_step(x, sigma_x, dt, g, L):
    """One draw from the reflected Gaussian kernel; returns (y, z) with y = x + sigma_x z."""
    y = L + abs(x - L + sigma_x * math.sqrt(dt) * g)
    return y, (y - x) / sigma_x


@njit(cache=True, nogil=True)
def crossing_flag(p, u, direct):
    # strict comparison: p = 0 never flags, p = 1 always flags for u in [0, 1)
    if direct:
        return u < 2.0 * p / (1.0 + p)
    return u < p


@njit(cache=True, nogil=True)
def engine1_step(kind, prm, dt, seed, path, i, x, g, direct, with_reg=True):
    """Returns (y, z, dw, flag, p, dB, alive, b, b', sigma, sigma') with coefficients at x.

    ``with_reg=False`` skips the regulator increment (returned as 0) for
    callers that provably never use it.
    """
    L = prm[0]
    b, db, s, ds = coeffs(kind, prm, x)
    if direct:
        y, z = reflected_step(x, s, dt, g, L)
    else:
        z = math.sqrt(dt) * g
        y = x + s * z
    alive = y > L or (direct and y >= L)
    p = crossing_prob(x, y, s * s, dt, L)
    flag = False
    if p > 0.0:
        fu, au = uniforms(seed, path, i)
        flag = crossing_flag(p, fu, direct)
    dreg = regulator_increment(x, s, dt, L) if with_reg else 0.0
    return y, z, z - (b / s) * dt, flag, p, dreg, alive, b, db, s, ds


@njit(cache=True, nogil=True)
def engine2_step(kind, prm, dt, seed, path, i, y, g):
    """Returns (y_next, z, dw, flag, p, dB, b, b', sigma, sigma') with coefficients at y."""
    L = prm[0]
    b, db, s, ds = coeffs(kind, prm, y)
    dw = math.sqrt(dt) * g
    prop = y + b * dt + s * dw
    y_next = L + abs(prop - L)
    dreg = 2.0 * max(0.0, L - prop)
    p = crossing_prob(y, y_next, s * s, dt, L)
    flag = prop < L
    if not flag and p > 0.0:
        fu, au = uniforms(seed, path, i)
        flag = au < p
    return y_next, dw + (b / s) * dt, dw, flag, p, dreg, b, db, s, ds


@njit(cache=True, nogil=True)
def step_gauss(seed, path, i, cached):
    """Gaussian of step i; ``cached`` holds the even-step partner drawn at step i-1.

    Returns (g_i, partner) so a loop over consecutive steps pays one Philox
    block and one logarithm per two steps.
    """
    if i & 1:
        return gauss_pair(seed, path, (i + 1) >> 1)
    return cached, cached


@njit(cache=True, nogil=True)
def killed_step(kind, prm, dt, x, g):
    """Drifted Euler step; returns (x_next, p)."""
    b, db, s, ds = coeffs(kind, prm, x)
    y = x + b * dt + s * math.sqrt(dt) * g
    return y, crossing_prob(x, y, s * s, dt, prm[0])


class PathStep(NamedTuple):
    x_prev: float
    x_next: float
    z: float
    dw: float
    flag: bool
    p: float
    db: float


@dataclass(frozen=True)
class PathRecord:
    """A stored trajectory; step i (1-based) moves x[i-1] -> x[i]."""

    engine: int
    backend: str
    dt: float
    x: np.ndarray
    z: np.ndarray
    dw: np.ndarray
    flag: np.ndarray
    p: np.ndarray
    db: np.ndarray
    weight: float = 1.0

    @property
    def terminal(self) -> float:
        return float(self.x[-1])

    @property
    def n(self) -> int:
        return len(self.x) - 1

    @property
    def first_cross(self) -> int | None:
        idx = np.flatnonzero(self.flag)
        return int(idx[0]) + 1 if idx.size else None

    @property
    def last_cross(self) -> int | None:
        idx = np.flatnonzero(self.flag)
        return int(idx[-1]) + 1 if idx.size else None

    @property
    def steps(self) -> list[PathStep]:
        return [PathStep(float(self.x[i]), float(self.x[i + 1]), float(self.z[i]), float(self.dw[i]),
                         bool(self.flag[i]), float(self.p[i]), float(self.db[i]))
                for i in range(self.n)]


@njit(cache=True, nogil=True)
def _record_engine1(kind, prm, dt, seed, path, x0, direct, x, z, dw, flag, p, dreg):
    x[0] = x0
    w = 1.0
    g2 = 0.0
    for i in range(1, x.shape[0]):
        g, g2 = step_gauss(seed, path, i, g2)
        y, zi, dwi, fl, pi, dbi, alive, _, _, _, _ = engine1_step(kind, prm, dt, seed, path, i, x[i - 1], g, direct)
        x[i] = y
        z[i - 1] = zi
        dw[i - 1] = dwi
        flag[i - 1] = fl
        p[i - 1] = pi
        dreg[i - 1] = dbi
        if not direct:
            if not alive:
                return 0.0, i
            w *= 2.0 if fl else 1.0
    return w, x.shape[0] - 1


@njit(cache=True, nogil=True)
def _record_engine2(kind, prm, dt, seed, path, x0, x, z, dw, flag, p, dreg):
    x[0] = x0
    g2 = 0.0
    for i in range(1, x.shape[0]):
        g, g2 = step_gauss(seed, path, i, g2)
        y, zi, dwi, fl, pi, dbi, _, _, _, _ = engine2_step(kind, prm, dt, seed, path, i, x[i - 1], g)
        x[i] = y
        z[i - 1] = zi
        dw[i - 1] = dwi
        flag[i - 1] = fl
        p[i - 1] = pi
        dreg[i - 1] = dbi


def _buffers(n):
    return (np.empty(n + 1), np.empty(n), np.empty(n), np.zeros(n, dtype=np.bool_),
            np.empty(n), np.empty(n))


def _check_start(model, x0):
    if x0 < model.L:
        raise ValueError(f"x0 = {x0} lies below the boundary L = {model.L}")


def simulate_engine1(model: CoefficientModel, grid: TimeGrid, stream: RngStream, x0: float,
                     backend: str = "direct") -> PathRecord:
    """Driftless reflected chain; the importance backend may die below L (weight 0, truncated record)."""
    if backend not in BACKENDS:
        raise ValueError(f"backend must be one of {BACKENDS}")
    _check_start(model, x0)
    x, z, dw, flag, p, dreg = _buffers(grid.n)
    w, last = _record_engine1(model.kind, model.prm, grid.dt, stream.master_seed, stream.path_index,
                              float(x0), backend == "direct", x, z, dw, flag, p, dreg)
    return PathRecord(1, backend, grid.dt, x[:last + 1], z[:last], dw[:last], flag[:last],
                      p[:last], dreg[:last], w)


def simulate_engine2(model: CoefficientModel, grid: TimeGrid, stream: RngStream, x0: float) -> PathRecord:
    """Symmetrized reflected Euler scheme with drift."""
    _check_start(model, x0)
    x, z, dw, flag, p, dreg = _buffers(grid.n)
    _record_engine2(model.kind, model.prm, grid.dt, stream.master_seed, stream.path_index,
                    float(x0), x, z, dw, flag, p, dreg)
    return PathRecord(2, "direct", grid.dt, x, z, dw, flag, p, dreg)


@njit(cache=True, nogil=True)
def _killed_path(kind, prm, dt, n, seed, path, x0, mode):
    L = prm[0]
    x = x0
    surv = 1.0 if x0 > L else 0.0
    g2 = 0.0
    for i in range(1, n + 1):
        if surv == 0.0:
            break
        g, g2 = step_gauss(seed, path, i, g2)
        y, p = killed_step(kind, prm, dt, x, g)
        if y <= L:
            surv = 0.0
        elif mode == 0:
            if p > 0.0 and uniforms(seed, path, i)[0] < p:
                surv = 0.0
        elif mode == 1:
            surv *= 1.0 - p
        x = y
    return x, surv


def simulate_killed(model: CoefficientModel, grid: TimeGrid, stream: RngStream, x0: float,
                    survival_mode: str = "conditional") -> tuple[float, float]:
    """Killed Euler path; returns (terminal state, survival weight in [0, 1]).

    ``bernoulli`` kills on U_i < p_i, ``conditional`` integrates the uniforms
    out, ``discrete`` ignores in-step crossings and monitors grid points only.
    """
    if survival_mode not in SURVIVAL_MODES:
        raise ValueError(f"survival_mode must be one of {sorted(SURVIVAL_MODES)}")
    _check_start(model, x0)
    return _killed_path(model.kind, model.prm, grid.dt, grid.n, stream.master_seed,
                        stream.path_index, float(x0), SURVIVAL_MODES[survival_mode])
