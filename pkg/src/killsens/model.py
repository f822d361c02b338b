"""Coefficient models, test payoffs and time grids.

Models and payoffs form closed registries of parametrized families so that a
run configuration stays pure data.  Every family is evaluated by a small
numba kernel (``coeffs`` / ``payoff_value`` / ``payoff_deriv``) keyed by an
integer kind and a flat parameter vector whose first entry is the boundary
level ``L``; the path engines call these kernels directly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numba import njit

FD_STEP = 1e-5
FD_TOL = 1e-6

# max over d >= 0 of 2d/(1+d^2)^2, attained at d = 1/sqrt(3)
_RATIONAL_SLOPE = 3.0 * math.sqrt(3.0) / 8.0

MODEL_KINDS = {"constant": 0, "tanh-drift": 1, "bounded-rational": 2}
MODEL_DEFAULTS = {
    "constant": {"L": 0.0, "b": 0.0, "sigma": 1.0},
    "tanh-drift": {"L": 0.0, "beta": 0.5, "s0": 1.0, "s1": 0.5},
    "bounded-rational": {"L": 0.0, "b0": 0.3, "b1": 0.3, "s0": 1.0, "s1": 0.4},
}
_MODEL_ORDER = {
    "constant": ("L", "b", "sigma"),
    "tanh-drift": ("L", "beta", "s0", "s1"),
    "bounded-rational": ("L", "b0", "b1", "s0", "s1"),
}

PAYOFF_KINDS = {"expm": 0, "smoothstep": 1, "indicator": 2}
PAYOFF_DEFAULTS = {
    "expm": {"scale": 1.0, "rate": 1.0},
    "smoothstep": {"scale": 1.0, "width": 1.0},
    "indicator": {"scale": 1.0, "K": 1.0},
}
_PAYOFF_ORDER = {
    "expm": ("scale", "rate"),
    "smoothstep": ("scale", "width"),
    "indicator": ("scale", "K"),
}


@njit(cache=True, nogil=True)
def coeffs(kind, prm, x):
    """Return ``(b, b', sigma, sigma')`` at ``x`` for a registry model."""
    if kind == 0:
        return prm[1], 0.0, prm[2], 0.0
    d = x - prm[0]
    q = 1.0 + d * d
    if kind == 1:
        beta, s0, s1 = prm[1], prm[2], prm[3]
        t = math.tanh(d)
        return beta * t, beta * (1.0 - t * t), s0 + s1 / q, -2.0 * s1 * d / (q * q)
    b0, b1, s0, s1 = prm[1], prm[2], prm[3], prm[4]
    return b0 + b1 / q, -2.0 * b1 * d / (q * q), s0 + s1 * d / q, s1 * (1.0 - d * d) / (q * q)


@njit(cache=True, nogil=True)
def payoff_value(kind, prm, y):
    L, scale = prm[0], prm[1]
    if kind == 0:
        return scale * (1.0 - math.exp(-prm[2] * (y - L)))
    if kind == 1:
        t = min(max((y - L) / prm[2], 0.0), 1.0)
        return scale * t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    return scale if y > prm[2] else 0.0


@njit(cache=True, nogil=True)
def payoff_deriv(kind, prm, y):
    L, scale = prm[0], prm[1]
    if kind == 0:
        return scale * prm[2] * math.exp(-prm[2] * (y - L))
    if kind == 1:
        t = (y - L) / prm[2]
        if t <= 0.0 or t >= 1.0:
            return 0.0
        return scale * 30.0 * t * t * (1.0 - t) * (1.0 - t) / prm[2]
    return math.nan


@njit(cache=True)
def _payoff_array(kind, prm, y, deriv):
    out = np.empty_like(y)
    for i in range(y.size):
        out[i] = payoff_deriv(kind, prm, y[i]) if deriv else payoff_value(kind, prm, y[i])
    return out


def _merge_params(defaults: dict, given: dict, what: str) -> dict:
    unknown = set(given) - set(defaults)
    if unknown:
        raise ValueError(f"unknown {what} parameter(s): {', '.join(sorted(unknown))}")
    out = dict(defaults)
    out.update({k: float(v) for k, v in given.items()})
    return out


@dataclass(frozen=True)
class CoefficientModel:
    """A bounded, uniformly elliptic coefficient pair (b, sigma) on [L, inf)."""

    name: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in MODEL_KINDS:
            raise ValueError(f"unknown model {self.name!r}; known: {sorted(MODEL_KINDS)}")
        merged = _merge_params(MODEL_DEFAULTS[self.name], self.params, "model")
        object.__setattr__(self, "params", merged)
        prm = np.array([merged[k] for k in _MODEL_ORDER[self.name]], dtype=np.float64)
        prm.setflags(write=False)
        object.__setattr__(self, "prm", prm)

    @classmethod
    def create(cls, name: str, **params) -> "CoefficientModel":
        return cls(name, params)

    @property
    def kind(self) -> int:
        return MODEL_KINDS[self.name]

    @property
    def L(self) -> float:
        return self.params["L"]

    def coeffs(self, x: float) -> tuple[float, float, float, float]:
        return coeffs(self.kind, self.prm, float(x))

    def b(self, x):
        return self.coeffs(x)[0]

    def sigma(self, x):
        return self.coeffs(x)[2]

    @property
    def is_constant(self) -> bool:
        return self.name == "constant"

    def bounds(self) -> dict:
        """Declared sup-norm bounds and the ellipticity floor on [L, inf)."""
        p = self.params
        if self.name == "constant":
            return dict(b_max=abs(p["b"]), db_max=0.0, dsigma_max=0.0,
                        sigma_max=p["sigma"], c_min=p["sigma"])
        if self.name == "tanh-drift":
            s0, s1 = p["s0"], p["s1"]
            return dict(b_max=abs(p["beta"]), db_max=abs(p["beta"]),
                        dsigma_max=abs(s1) * _RATIONAL_SLOPE,
                        sigma_max=s0 + max(s1, 0.0), c_min=s0 + min(s1, 0.0))
        s0, s1 = p["s0"], p["s1"]
        return dict(b_max=abs(p["b0"]) + abs(p["b1"]), db_max=abs(p["b1"]) * _RATIONAL_SLOPE,
                    dsigma_max=abs(s1), sigma_max=s0 + max(s1, 0.0) / 2,
                    c_min=s0 + min(s1, 0.0) / 2)

    def boundary_boa(self) -> float:
        """(b/a)(L), the coefficient of the boundary terms."""
        b, _, s, _ = self.coeffs(self.L)
        return b / (s * s)

    def to_dict(self) -> dict:
        return {"name": self.name, **self.params}


@dataclass(frozen=True)
class TestFunction:
    """Payoff f on [L, inf) with f(L) = 0; ``smooth`` is False for the measurable class."""

    __test__ = False  # not a pytest class

    name: str
    L: float = 0.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.name not in PAYOFF_KINDS:
            raise ValueError(f"unknown payoff {self.name!r}; known: {sorted(PAYOFF_KINDS)}")
        merged = _merge_params(PAYOFF_DEFAULTS[self.name], self.params, "payoff")
        object.__setattr__(self, "params", merged)
        prm = np.array([self.L] + [merged[k] for k in _PAYOFF_ORDER[self.name]], dtype=np.float64)
        prm.setflags(write=False)
        object.__setattr__(self, "prm", prm)

    @classmethod
    def create(cls, name: str, L: float = 0.0, **params) -> "TestFunction":
        return cls(name, float(L), params)

    @property
    def kind(self) -> int:
        return PAYOFF_KINDS[self.name]

    @property
    def smooth(self) -> bool:
        return self.name != "indicator"

    def __call__(self, y):
        if np.ndim(y):
            arr = np.asarray(y, dtype=np.float64)
            return _payoff_array(self.kind, self.prm, arr.ravel(), False).reshape(arr.shape)
        return payoff_value(self.kind, self.prm, float(y))

    def deriv(self, y):
        if not self.smooth:
            raise ValueError(f"payoff {self.name!r} has no derivative")
        if np.ndim(y):
            arr = np.asarray(y, dtype=np.float64)
            return _payoff_array(self.kind, self.prm, arr.ravel(), True).reshape(arr.shape)
        return payoff_deriv(self.kind, self.prm, float(y))

    def breakpoints(self) -> list[float]:
        """Points where f or f'' is not smooth, for quadrature splitting."""
        if self.name == "indicator":
            return [self.params["K"]]
        if self.name == "smoothstep":
            return [self.L + self.params["width"]]
        return []

    def to_dict(self) -> dict:
        return {"name": self.name, **self.params}


@dataclass(frozen=True)
class TimeGrid:
    T: float
    n: int

    def __post_init__(self):
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.n < 0:
            raise ValueError("n must be nonnegative")
        if self.n and self.T / self.n > 1.0:
            raise ValueError(f"step T/n = {self.T / self.n} exceeds 1")

    @property
    def dt(self) -> float:
        return self.T / self.n if self.n else 0.0

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n + 1) * self.dt


class DerivedCoeffs(NamedTuple):
    b: float
    db: float
    sigma: float
    dsigma: float
    a: float
    da: float
    bbar: float
    boa: float
    dboa: float


def derived_coeffs(model: CoefficientModel, x: float) -> DerivedCoeffs:
    """Coefficients at ``x`` plus a = sigma^2, a', bbar = b' - sigma' b / sigma, b/a and (b/a)'."""
    b, db, s, ds = model.coeffs(x)
    a = s * s
    da = 2.0 * s * ds
    return DerivedCoeffs(b, db, s, ds, a, da, db - ds * b / s, b / a, (db * a - b * da) / (a * a))


def validate(model: CoefficientModel, f: TestFunction, probe_grid) -> list[str]:
    """List every violated admissibility condition; an empty list means admissible."""
    grid = np.asarray(probe_grid, dtype=np.float64)
    if grid.size == 0:
        raise ValueError("probe grid is empty")
    if np.any(grid < model.L):
        raise ValueError("probe grid has points below the boundary L")
    problems = []
    if f.L != model.L:
        problems.append(f"payoff boundary {f.L} differs from model boundary {model.L}")
    if f(model.L) != 0.0:
        problems.append(f"f(L)=0 violated: f(L) = {f(model.L)!r}")
    bd = model.bounds()
    h = FD_STEP
    for x in grid:
        b, db, s, ds = model.coeffs(x)
        if not s >= bd["c_min"] or not s > 0:
            problems.append(f"ellipticity violated at x={x}: sigma={s}")
        if abs(b) > bd["b_max"] * (1 + 1e-12):
            problems.append(f"drift bound violated at x={x}: |b|={abs(b)}")
        if abs(db) > bd["db_max"] * (1 + 1e-12) + 1e-15:
            problems.append(f"drift-derivative bound violated at x={x}")
        if abs(ds) > bd["dsigma_max"] * (1 + 1e-12) + 1e-15:
            problems.append(f"sigma-derivative bound violated at x={x}")
        lo, hi = model.coeffs(x - h), model.coeffs(x + h)
        if abs((hi[2] - lo[2]) / (2 * h) - ds) > FD_TOL:
            problems.append(f"sigma' inconsistent with finite differences at x={x}")
        if abs((hi[0] - lo[0]) / (2 * h) - db) > FD_TOL:
            problems.append(f"b' inconsistent with finite differences at x={x}")
        if f.smooth and x - h >= f.L:
            if abs((f(x + h) - f(x - h)) / (2 * h) - f.deriv(x)) > FD_TOL:
                problems.append(f"f' inconsistent with finite differences at x={x}")
    return problems
