"""Per-step weight factors and their fold along a stored path.

Conventions: ``u`` is the standardized distance to the boundary of the step's
starting point, ``(x_prev - L) / (sigma_prev * sqrt(dt))``; ``X_j - L`` is
always the post-indexed distance of point j.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np
from numba import njit, vectorize

from .model import coeffs

if TYPE_CHECKING:
    from .model import CoefficientModel
    from .sampling import PathRecord

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_INV_SQRT2 = 1.0 / math.sqrt(2.0)
# beyond this phi(u) / u^2 is below the smallest subnormal
_THETA_CUTOFF = 38.5
_SERIES_START = 8.0
_SERIES_TERMS = 40


def _theta_impl(u):
    if u > _THETA_CUTOFF:
        return 0.0
    phi = _INV_SQRT_2PI * math.exp(-0.5 * u * u)
    if u <= _SERIES_START:
        return phi - u * 0.5 * math.erfc(u * _INV_SQRT2)
    # 1 - u * Mills(u) = sum_k (-1)^(k+1) (2k-1)!! / u^(2k); terms shrink until k ~ u^2/2
    inv2 = 1.0 / (u * u)
    term = inv2
    acc = 0.0
    for k in range(1, _SERIES_TERMS + 1):
        acc += term
        nxt = -term * (2 * k + 1) * inv2
        if abs(nxt) >= abs(term) or abs(nxt) < 1e-17 * acc:
            break
        term = nxt
    return phi * acc


_theta_scalar = njit(cache=True, nogil=True)(_theta_impl)
theta = vectorize(["float64(float64)"], cache=True)(_theta_impl)
theta.__doc__ = """phi(u) - u * Phibar(u) for u >= 0, computed without tail cancellation."""


@njit(cache=True, nogil=True)
def regulator_increment(x_prev, sigma_prev, dt, L):
    """Predictable regulator increment 2 sigma sqrt(dt) theta(u); strictly positive."""
    sq = math.sqrt(dt)
    return 2.0 * sigma_prev * sq * _theta_scalar((x_prev - L) / (sigma_prev * sq))


@njit(cache=True, nogil=True)
def step_e(bbar, dsigma, dt, z, flag, u):
    """Flow-derivative factor of one step written with the driftless increment z."""
    if flag:
        return 1.0 + dsigma * z - dsigma * (z + math.sqrt(dt) * u)
    return 1.0 + bbar * dt + dsigma * z


@njit(cache=True, nogil=True)
def step_kappa(b, sigma, z, dt):
    r = b / sigma
    return r * z - 0.5 * r * r * dt


@njit(cache=True, nogil=True)
def step_h(boa, dboa, dist_prev, flag):
    if not flag:
        return 0.0
    return boa + dist_prev * dboa


@njit(cache=True, nogil=True)
def step_psi(db, dsigma, dw, dreg, two_boa_L, dt):
    """Increment of log Psi: (b' - sigma'^2/2) dt + sigma' dw + 2 (b/a)(L) dB."""
    return (db - 0.5 * dsigma * dsigma) * dt + dsigma * dw + two_boa_L * dreg


@njit(cache=True, nogil=True)
def step_ehat(db, dsigma, dw, flag, dist_next, boa_L, dt):
    if flag:
        return 1.0 + boa_L * dist_next
    return 1.0 + db * dt + dsigma * dw


@dataclass(frozen=True)
class BoundaryConstants:
    boaL: float

    @property
    def twoBoaL(self) -> float:
        return 2.0 * self.boaL

    @classmethod
    def from_model(cls, model: "CoefficientModel") -> "BoundaryConstants":
        return cls(model.boundary_boa())


@dataclass
class WeightState:
    E: float = 1.0
    logK: float = 0.0
    B: float = 0.0
    logPsi: float = 0.0
    Ehat: float = 1.0
    E_before_last_cross: float = 0.0
    step: int = 0

    @property
    def K(self) -> float:
        return math.exp(self.logK)

    @property
    def Psi(self) -> float:
        return math.exp(self.logPsi)


@njit(cache=True, nogil=True)
def _fold(kind, prm, dt, engine, x, z, dw, flag, db_arr, two_boa_L, boa_L, out):
    L = prm[0]
    sq = math.sqrt(dt)
    E = 1.0
    logK = 0.0
    B = 0.0
    logPsi = 0.0
    Ehat = 1.0
    snap = 0.0
    for i in range(1, x.shape[0]):
        b, db, s, ds = coeffs(kind, prm, x[i - 1])
        fl = flag[i - 1]
        if engine == 1:
            u = (x[i - 1] - L) / (s * sq)
            if fl:
                snap = E
            E *= step_e(db - ds * b / s, ds, dt, z[i - 1], fl, u)
            logK += step_kappa(b, s, z[i - 1], dt)
            Ehat *= step_ehat(db, ds, dw[i - 1], fl, x[i] - L, boa_L, dt)
        B += db_arr[i - 1]
        logPsi += step_psi(db, ds, dw[i - 1], db_arr[i - 1], two_boa_L, dt)
    out[0] = E
    out[1] = logK
    out[2] = B
    out[3] = logPsi
    out[4] = Ehat
    out[5] = snap


def fold_weights(path: "PathRecord", model: "CoefficientModel",
                 consts: BoundaryConstants | None = None) -> WeightState:
    """Run the weight recursions along a stored path.

    Engine 2 paths only carry the regulator and log Psi; E, K and Ehat stay at
    their empty-product values.  With no crossing flag the snapshot is 0.
    """
    consts = consts or BoundaryConstants.from_model(model)
    out = np.empty(6)
    _fold(model.kind, model.prm, path.dt, path.engine, path.x, path.z, path.dw,
          path.flag, path.db, consts.twoBoaL, consts.boaL, out)
    E, logK, B, logPsi, Ehat, snap = (float(v) for v in out)
    return WeightState(E=E, logK=logK, B=B, logPsi=logPsi, Ehat=Ehat,
                       E_before_last_cross=snap, step=len(path.x) - 1)
