"""Derivative of a killed Brownian semigroup, taken right at the boundary.

Brownian motion started at the barrier L = 0 dies immediately, so P_T f(0) = 0,
yet the slope d/dx P_T f(0) is finite.  For f(y) = 1 - exp(-y) and T = 1 it is
2 e^{1/2} Phibar(1).  Finite differences cannot be centred at x = L; the
reflected-process estimator needs only paths started at L itself.
"""
import math

from scipy.special import ndtr

from killsens import CoefficientModel, TestFunction, TimeGrid
from killsens.estimators import RunSpec, estimate_all
from killsens.oracle_analytic import GaussKernelParams, oracle_deriv

model = CoefficientModel("constant", {"b": 0.0, "sigma": 1.0, "L": 0.0})
f = TestFunction("expm", 0.0)

closed_form = 2 * math.exp(0.5) * ndtr(-1.0)
quadrature = oracle_deriv(f, 0.0, GaussKernelParams(), route="both").value
print(f"closed form      {closed_form:.10f}")
print(f"quadrature       {quadrature:.10f}")

# %% Both reflected engines, plus the one-sided finite difference on the killed chain
for engine in (1, 2):
    spec = RunSpec(model, f, 0.0, TimeGrid(1.0, 256), paths=200_000, seed=engine, engine=engine)
    res = estimate_all(spec, ("reflected", "bel", "fd"))
    for name, r in res.items():
        print(f"engine {engine} {name:>9}: {r.mean:.5f} +- {r.stderr:.5f}   z = {r.z_score(closed_form):+.2f}")
