"""Closed-form kernels for constant coefficients and quadrature references.

For dX = mu dt + sigma dW killed at L, Girsanov's theorem applied to the
reflection-principle density of Brownian motion gives, with
phi_t(z) = exp(-z^2 / (2 sigma^2 t)) / (sigma sqrt(2 pi t)),

    q_t(x, y) = phi_t(y - x - mu t) - exp(-2 mu (x - L) / sigma^2) phi_t(y + x - 2L - mu t).

Derivation: under the driftless law the density is q0 = phi_t(y - x) - phi_t(y + x - 2L);
the density of the drifted law on paths ending at y is exp(mu (y - x) / sigma^2
- mu^2 t / (2 sigma^2)) times that, and completing the square in each term
gives the expression above.  The x-derivative used by ``oracle_deriv`` is

    d_x q = (y - x - mu t)/(sigma^2 t) phi_t(y - x - mu t)
            + exp(-2 mu (x - L)/sigma^2) phi_t(w) (2 mu / sigma^2 + w / (sigma^2 t)),
    w = y + x - 2L - mu t.

The reflected kernel (mu = 0) is q+ = phi_t(y - x) + phi_t(y + x - 2L).  The
two kernels are linked by d_x q- = -d_y q+, which is what moves the
derivative from the killed kernel onto the payoff.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate
from scipy.special import ndtr

from .model import CoefficientModel, TestFunction
from .sampling import crossing_prob

QUAD_EPSABS = 1e-10
QUAD_LIMIT = 2 ** 15
TRUNCATION_SIGMAS = 12.0
ROUTE_TOL = 1e-9


@dataclass(frozen=True)
class GaussKernelParams:
    mu: float = 0.0
    sigma: float = 1.0
    L: float = 0.0
    T: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @classmethod
    def from_model(cls, model: CoefficientModel, T: float) -> "GaussKernelParams":
        if not model.is_constant:
            raise ValueError("closed-form kernels need a constant-coefficient model")
        return cls(model.params["b"], model.params["sigma"], model.L, T)


@dataclass(frozen=True)
class OracleResult:
    value: float
    tolerance: float
    method: str
    abserr: float = 0.0


def _phi(z, var):
    return np.exp(-0.5 * z * z / var) / np.sqrt(2.0 * np.pi * var)


def _reflection_factor(x, prm):
    return np.exp(-2.0 * prm.mu * (x - prm.L) / prm.sigma ** 2)


def killed_kernel(x, y, prm: GaussKernelParams, t: float | None = None):
    """Density of the killed process at y started from x; zero for y <= L."""
    t = prm.T if t is None else t
    x, y = np.asarray(x, float), np.asarray(y, float)
    var = prm.sigma ** 2 * t
    q = _phi(y - x - prm.mu * t, var) - _reflection_factor(x, prm) * _phi(y + x - 2 * prm.L - prm.mu * t, var)
    out = np.where(y > prm.L, q, 0.0)
    return out if out.ndim else float(out)


def killed_kernel_dx(x, y, prm: GaussKernelParams, t: float | None = None):
    t = prm.T if t is None else t
    x, y = np.asarray(x, float), np.asarray(y, float)
    s2 = prm.sigma ** 2
    var = s2 * t
    v = y - x - prm.mu * t
    w = y + x - 2 * prm.L - prm.mu * t
    d = v / var * _phi(v, var) + _reflection_factor(x, prm) * _phi(w, var) * (2 * prm.mu / s2 + w / var)
    out = np.where(y > prm.L, d, 0.0)
    return out if out.ndim else float(out)


def _driftless(prm):
    if prm.mu != 0.0:
        raise ValueError("the reflected kernel is only defined here for mu = 0")


def reflected_kernel(x, y, prm: GaussKernelParams, t: float | None = None):
    _driftless(prm)
    t = prm.T if t is None else t
    x, y = np.asarray(x, float), np.asarray(y, float)
    var = prm.sigma ** 2 * t
    q = _phi(y - x, var) + _phi(y + x - 2 * prm.L, var)
    out = np.where(y >= prm.L, q, 0.0)
    return out if out.ndim else float(out)


def reflected_kernel_dy(x, y, prm: GaussKernelParams, t: float | None = None):
    _driftless(prm)
    t = prm.T if t is None else t
    x, y = np.asarray(x, float), np.asarray(y, float)
    var = prm.sigma ** 2 * t
    v, w = y - x, y + x - 2 * prm.L
    out = -(v * _phi(v, var) + w * _phi(w, var)) / var
    return out if out.ndim else float(out)


def bridge_crossing_prob_cont(x: float, y: float, prm: GaussKernelParams, t: float | None = None) -> float:
    """Probability that a Brownian bridge from x to y over time t touches L."""
    t = prm.T if t is None else t
    return crossing_prob(float(x), float(y), prm.sigma * prm.sigma, float(t), prm.L)


# ---------------------------------------------------------------- quadrature

def _upper(x, prm, scale=1.0):
    return x + max(prm.mu * prm.T, 0.0) + scale * TRUNCATION_SIGMAS * prm.sigma * math.sqrt(prm.T)


def integrate_against(fn, x: float, prm: GaussKernelParams, breakpoints=(), scale: float = 1.0,
                      lower: float | None = None) -> tuple[float, float]:
    """Integral of fn over [L, upper] split at the given breakpoints; returns (value, error)."""
    lo = prm.L if lower is None else lower
    hi = _upper(x, prm, scale)
    cuts = sorted({lo, hi, *(c for c in breakpoints if lo < c < hi), *([x] if lo < x < hi else [])})
    total, err = 0.0, 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        v, e = integrate.quad(fn, a, b, epsabs=QUAD_EPSABS * 1e-2, epsrel=1e-13, limit=QUAD_LIMIT)
        total += v
        err += e
    return total, err


def oracle_value(f: TestFunction, x: float, prm: GaussKernelParams, truncation_scale: float = 1.0) -> OracleResult:
    """P_T f(x) for the killed constant-coefficient diffusion."""
    if x < prm.L:
        raise ValueError("x must be >= L")
    v, e = integrate_against(lambda y: f(y) * killed_kernel(x, y, prm), x, prm, f.breakpoints(), truncation_scale)
    return OracleResult(v, QUAD_EPSABS, "quad:killed-kernel", e)


def oracle_deriv(f: TestFunction, x: float, prm: GaussKernelParams, route: str = "kernel",
                 truncation_scale: float = 1.0) -> OracleResult:
    """d/dx P_T f(x).

    ``kernel`` integrates f against d_x q; ``reflected`` (mu = 0, f' needed)
    integrates f' against the reflected kernel.  ``both`` computes the two
    and raises if they disagree by more than ``ROUTE_TOL``.
    """
    if x < prm.L:
        raise ValueError("x must be >= L")
    if route not in ("kernel", "reflected", "both"):
        raise ValueError("route must be kernel, reflected or both")
    bps = f.breakpoints()
    if route in ("kernel", "both"):
        v1, e1 = integrate_against(lambda y: f(y) * killed_kernel_dx(x, y, prm), x, prm, bps, truncation_scale)
        if route == "kernel":
            return OracleResult(v1, QUAD_EPSABS, "quad:dx-killed-kernel", e1)
    _driftless(prm)
    v2, e2 = integrate_against(lambda y: f.deriv(y) * reflected_kernel(x, y, prm), x, prm, bps, truncation_scale)
    if route == "reflected":
        return OracleResult(v2, QUAD_EPSABS, "quad:reflected-kernel", e2)
    if abs(v1 - v2) > ROUTE_TOL:
        raise ArithmeticError(f"derivative routes disagree: {v1!r} vs {v2!r}")
    return OracleResult(v1, max(QUAD_EPSABS, abs(v1 - v2)), "quad:both-routes", e1)


def survival_probability(x: float, prm: GaussKernelParams) -> float:
    """P(tau > T) for the killed constant-coefficient diffusion (closed form)."""
    s = prm.sigma * math.sqrt(prm.T)
    d = x - prm.L
    return float(ndtr((d + prm.mu * prm.T) / s)
                 - math.exp(-2 * prm.mu * d / prm.sigma ** 2) * ndtr((-d + prm.mu * prm.T) / s))


def chapman_kolmogorov_gap(x: float, y: float, prm: GaussKernelParams) -> float:
    """|int q_{T/2}(x, z) q_{T/2}(z, y) dz - q_T(x, y)|."""
    h = prm.T / 2
    v, _ = integrate_against(lambda z: killed_kernel(x, z, prm, h) * killed_kernel(z, y, prm, h),
                             max(x, y), prm, (x, y), scale=1.5)
    return abs(v - killed_kernel(x, y, prm))
