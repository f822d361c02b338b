"""Deterministic checks of the one-step identities behind the estimators.

Every Monte Carlo weight above rests on a handful of Gaussian integrals over
one Euler step.  Here they are evaluated by fixed Gauss-Legendre quadrature
(no randomness), so any error in a weight formula shows up as a residual far
above 1e-10 instead of hiding in Monte Carlo noise.
"""
from collections import defaultdict

from killsens.identity_checks import default_suite

worst = defaultdict(float)
count = defaultdict(int)
for r in default_suite():
    key = r.identity.split("[")[0]
    worst[key] = max(worst[key], abs(r.residual))
    count[key] += 1
for key in sorted(worst):
    print(f"{key:>16}: {count[key]:3d} checks, worst residual {worst[key]:.2e}")
