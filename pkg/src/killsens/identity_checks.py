"""Quadrature certification of the one-step identities of the killed Euler chain.

Every check integrates out the uniform U of the crossing flag (weights 1 - p
and p, or 2p inside the reflected weight m-bar) and evaluates the remaining
Gaussian integral in the standardized increment z with composite
Gauss-Legendre rules, so the residuals carry no Monte Carlo noise.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .model import CoefficientModel, TestFunction
from .oracle_analytic import GaussKernelParams, killed_kernel_dx, reflected_kernel_dy
from .weights import theta

Z_MAX = 40.0
PANELS = 96
ORDER = 24

TOL_PUSHFORWARD = 1e-6
TOL_MOMENTS = 1e-10
TOL_IBP = 1e-8
TOL_KERNEL = 1e-10


@dataclass(frozen=True)
class IdentityReport:
    identity: str
    x: float
    dt: float
    lhs: float
    rhs: float
    residual: float
    tolerance: float
    model: str = ""

    @property
    def passed(self) -> bool:
        return abs(self.residual) <= self.tolerance

    def as_row(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def _report(identity, x, dt, lhs, rhs, tol, model="", residual=None):
    res = lhs - rhs if residual is None else residual
    return IdentityReport(identity, float(x), float(dt), float(lhs), float(rhs), float(res), tol, model)


# ---------------------------------------------------------------- quadrature

@lru_cache(maxsize=8)
def _gl(order):
    return np.polynomial.legendre.leggauss(order)


def zquad(fn: Callable[[np.ndarray], np.ndarray], a: float, b: float, breaks=(),
          panels: int = PANELS, order: int = ORDER) -> float:
    """Composite Gauss-Legendre integral of a vectorized fn over [a, b]."""
    if not b > a:
        return 0.0
    edges = np.union1d(np.linspace(a, b, panels + 1), [c for c in breaks if a < c < b])
    t, w = _gl(order)
    mid = 0.5 * (edges[1:] + edges[:-1])[:, None]
    half = 0.5 * np.diff(edges)[:, None]
    nodes = (mid + half * t).ravel()
    weights = (half * w).ravel()
    return float(np.dot(weights, fn(nodes)))


def _npdf(z):
    return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------- push-forward

def _step_geometry(model, x, dt):
    b, db, s, ds = model.coeffs(x)
    sq = math.sqrt(dt)
    zstar = (model.L - x - b * dt) / (s * sq)  # X_1 > L  <=>  z > zstar
    return b, db, s, ds, sq, zstar


def _payoff_breaks(F, x, b, s, sq, dt):
    return [(c - x - b * dt) / (s * sq) for c in F.breakpoints()]


def _crossing(x, x1, a, dt, L):
    with np.errstate(over="ignore"):
        e = np.minimum(-2.0 * (x - L) * (x1 - L) / (a * dt), 0.0)
    return np.where(x1 > L, np.exp(e), 1.0)


def killed_one_step(model: CoefficientModel, F: TestFunction, x: float, dt: float) -> float:
    """E[F(X_1) 1_{X_1 > L} 1_{U > p}] from X_0 = x."""
    b, db, s, ds, sq, zstar = _step_geometry(model, x, dt)
    L = model.L

    def integrand(z):
        x1 = x + b * dt + s * sq * z
        return F(x1) * (1.0 - _crossing(x, x1, s * s, dt, L)) * _npdf(z)

    return zquad(integrand, max(zstar, -Z_MAX), Z_MAX, _payoff_breaks(F, x, b, s, sq, dt))


def pushforward_rhs(model: CoefficientModel, F: TestFunction, x: float, dt: float) -> float:
    """E[(F'(X_1) e + F(X_1) h) m-bar] with U integrated out."""
    b, db, s, ds, sq, zstar = _step_geometry(model, x, dt)
    L, a = model.L, s * s
    d = x - L
    # (b/a)' = (b' a - b a') / a^2 with a' = 2 s s'
    dboa = (db * a - b * 2.0 * s * ds) / (a * a)
    e_flag = 1.0 - ds * d / s
    h_flag = b / a + d * dboa

    def integrand(z):
        x1 = x + b * dt + s * sq * z
        p = _crossing(x, x1, a, dt, L)
        fp, fv = F.deriv(x1), F(x1)
        e_free = 1.0 + db * dt + ds * sq * z
        return (fp * e_free * (1.0 - p) + (fp * e_flag + fv * h_flag) * 2.0 * p) * _npdf(z)

    return zquad(integrand, max(zstar, -Z_MAX), Z_MAX, _payoff_breaks(F, x, b, s, sq, dt))


def _richardson_derivative(V, x, L, h):
    if x - L >= h:
        D = lambda k: (V(x + k) - V(x - k)) / (2 * k)
        return (4 * D(h / 2) - D(h)) / 3
    # one-sided next to the boundary, where V is only right-differentiable
    D = lambda k: (V(x + k) - V(x)) / k
    return 2 * D(h / 2) - D(h)


def check_pushforward_one_step(model: CoefficientModel, F: TestFunction, x: float, dt: float,
                               tol: float = TOL_PUSHFORWARD) -> IdentityReport:
    """d/dx E[F m] against E[(F' e + F h) m-bar] for one Euler step from x."""
    if x < model.L:
        raise ValueError("x must be >= L")
    if not F.smooth:
        raise ValueError("the push-forward check needs a differentiable F")
    if F(model.L) != 0.0:
        raise ValueError("F must vanish at L")
    h = 1e-4 * max(1.0, x - model.L)
    lhs = _richardson_derivative(lambda v: killed_one_step(model, F, v, dt), x, model.L, h)
    return _report("pushforward", x, dt, lhs, pushforward_rhs(model, F, x, dt), tol, model.name)


# ---------------------------------------------------------------- moments

def moment_two_integral(k: int, u: float, dt: float) -> float:
    """E~[Z^k m-bar] written as the sum of a plain and a reflected Gaussian integral."""
    lo1, lo2 = max(-u, -Z_MAX), max(u, -Z_MAX)
    i1 = zquad(lambda z: z ** k * _npdf(z), lo1, Z_MAX, (0.0,))
    i2 = zquad(lambda z: (z - 2.0 * u) ** k * _npdf(z), lo2, Z_MAX, (2.0 * u,))
    return dt ** (k / 2) * (i1 + i2)


def moment_closed_form(k: int, u: float, dt: float) -> float:
    th = float(theta(u))
    if k == 0:
        return 1.0
    if k == 1:
        return 2.0 * math.sqrt(dt) * th
    if k == 2:
        return dt - 4.0 * dt * u * th
    raise ValueError("closed forms exist for k = 0, 1, 2")


def moment_direct(k: int, x: float, sigma: float, dt: float, L: float = 0.0) -> float:
    """E~[Z^k 1_{X_1 > L} (1 + 1_{U <= p})] under the driftless step X_1 = x + sigma Z."""
    sq = math.sqrt(dt)
    zstar = (L - x) / (sigma * sq)

    def integrand(z):
        x1 = x + sigma * sq * z
        return (sq * z) ** k * (1.0 + _crossing(x, x1, sigma * sigma, dt, L)) * _npdf(z)

    return zquad(integrand, max(zstar, -Z_MAX), Z_MAX, (0.0,))


def regulator_identity(x: float, sigma: float, dt: float, L: float = 0.0) -> tuple[float, float]:
    """(2 E~[(sigma Z + x - L) 1_{U <= p} 1_{X_1 > L}],  2 sigma sqrt(dt) theta(u))."""
    sq = math.sqrt(dt)
    zstar = (L - x) / (sigma * sq)

    def integrand(z):
        x1 = x + sigma * sq * z
        return (sigma * sq * z + x - L) * _crossing(x, x1, sigma * sigma, dt, L) * _npdf(z)

    lhs = 2.0 * zquad(integrand, max(zstar, -Z_MAX), Z_MAX, (0.0,))
    return lhs, 2.0 * sigma * sq * float(theta((x - L) / (sigma * sq)))


def check_moments(x: float, sigma_prev: float, dt: float, L: float = 0.0,
                  tol: float = TOL_MOMENTS, model: str = "") -> list[IdentityReport]:
    """Moments k = 0, 1, 2 of Z under m-bar, in the two-integral and direct forms, and the regulator increment."""
    if x < L:
        raise ValueError("x must be >= L")
    u = (x - L) / (sigma_prev * math.sqrt(dt))
    out = []
    for k in (0, 1, 2):
        closed = moment_closed_form(k, u, dt)
        out.append(_report(f"moment{k}", x, dt, moment_two_integral(k, u, dt), closed, tol, model))
        out.append(_report(f"moment{k}_direct", x, dt, moment_direct(k, x, sigma_prev, dt, L), closed, tol, model))
    lhs, rhs = regulator_identity(x, sigma_prev, dt, L)
    out.append(_report("regulator", x, dt, lhs, rhs, tol, model))
    return out


# ---------------------------------------------------------------- integration by parts

def check_ibp(model: CoefficientModel, G: Callable, dG: Callable, x: float, dt: float,
              tol: float = TOL_IBP, label: str = "") -> IdentityReport:
    """E[G d_x p] = -2 E[dG/dw p d_x((x-L)/sigma)] - 2 E[G p d_x(b (x-L)/a)].

    G = G(x, w) with w the Brownian increment of the step; p is the
    unclamped exponential exp(-2 (x-L)(X_1-L) / (a dt)) on the whole line,
    which is the setting in which the Gaussian integration by parts holds.
    """
    if x < model.L:
        raise ValueError("x must be >= L")
    b, db, s, ds = model.coeffs(x)
    L, a, da = model.L, s * s, 2 * s * ds
    d = x - L
    sq = math.sqrt(dt)
    u = d / (s * sq)
    d_scaled = 1.0 / s - d * ds / (s * s)
    d_drift = (db * d + b) / a - b * d * da / (a * a)

    def p_phi(z):
        # p * phi(z) evaluated jointly: p alone overflows far below the boundary
        x1 = x + b * dt + s * sq * z
        return x1, np.exp(-2.0 * d * (x1 - L) / (a * dt) - 0.5 * z * z) / math.sqrt(2.0 * math.pi)

    def lhs_integrand(z):
        x1, pphi = p_phi(z)
        w = sq * z
        A = d / (a * dt) * (1.0 + db * dt + ds * w) + (x1 - L) / (a * dt) - da * d * (x1 - L) / (a * a * dt)
        return G(x, w) * (-2.0 * pphi * A)

    def rhs_integrand(z):
        _, pphi = p_phi(z)
        w = sq * z
        return -2.0 * dG(x, w) * pphi * d_scaled - 2.0 * G(x, w) * pphi * d_drift

    lo = -2.0 * u - Z_MAX
    lhs = zquad(lhs_integrand, lo, Z_MAX, (0.0, -2.0 * u), panels=2 * PANELS)
    rhs = zquad(rhs_integrand, lo, Z_MAX, (0.0, -2.0 * u), panels=2 * PANELS)
    return _report(f"ibp{label}", x, dt, lhs, rhs, tol, model.name)


# ---------------------------------------------------------------- kernels

def check_kernel_symmetry(sigma: float = 1.0, T: float = 1.0, L: float = 0.0, npts: int = 100,
                          width: float = 5.0, tol: float = TOL_KERNEL) -> IdentityReport:
    """max |d_x q-(x, y) + d_y q+(x, y)| over an npts x npts grid on [L, L + width sigma]^2."""
    prm = GaussKernelParams(0.0, sigma, L, T)
    g = L + np.linspace(0.0, width * sigma, npts)
    X, Y = np.meshgrid(g, g, indexing="ij")
    kx = killed_kernel_dx(X, Y, prm)
    ky = reflected_kernel_dy(X, Y, prm)
    i = np.unravel_index(np.argmax(np.abs(kx + ky)), X.shape)
    return _report("kernel_symmetry", X[i], T, kx[i], -ky[i], tol, f"sigma={sigma}",
                   residual=float(np.max(np.abs(kx + ky))))


# ---------------------------------------------------------------- default suite

SUITE_MODELS = ("tanh-drift", "bounded-rational")
SUITE_STEPS = (1e-2, 1e-3)
SUITE_OFFSETS = (0.0, 0.1, 1.0, 3.0, 10.0)  # multiples of sigma(L) sqrt(dt)
SUITE_FIXED_OFFSET = 0.3
IBP_TESTS = {
    "[G=1]": (lambda x, w: np.ones_like(w), lambda x, w: np.zeros_like(w)),
    "[G=w]": (lambda x, w: w, lambda x, w: np.ones_like(w)),
    "[G=sin(x+w)]": (lambda x, w: np.sin(x + w), lambda x, w: np.cos(x + w)),
}


def suite_points(model: CoefficientModel, dt: float) -> list[float]:
    s_L = model.sigma(model.L)
    pts = [model.L + c * s_L * math.sqrt(dt) for c in SUITE_OFFSETS]
    return pts + [model.L + SUITE_FIXED_OFFSET]


def default_suite(models=SUITE_MODELS, steps=SUITE_STEPS) -> list[IdentityReport]:
    """Every identity at 6 state points per model and step size, plus the kernel grid checks."""
    reports = []
    for name in models:
        model = CoefficientModel.create(name)
        F = TestFunction.create("expm", model.L)
        for dt in steps:
            for x in suite_points(model, dt):
                reports.append(check_pushforward_one_step(model, F, x, dt))
                reports.extend(check_moments(x, model.sigma(x), dt, model.L, model=name))
                for label, (G, dG) in IBP_TESTS.items():
                    reports.append(check_ibp(model, G, dG, x, dt, label=label))
    for sigma in (1.0, 2.0):
        reports.append(check_kernel_symmetry(sigma))
    return reports
