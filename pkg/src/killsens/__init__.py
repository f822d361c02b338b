"""Monte Carlo sensitivities of killed diffusions on a half-line.

The derivative of the killed semigroup is estimated through reflected-process
representations: a reflected-measure chain with Girsanov and flow weights,
the symmetrized reflected Euler scheme, and a boundary-valid
Bismut-Elworthy-Li weight.  Analytic kernels, a Crank-Nicolson solver and
quadrature checks of the one-step identities serve as references.
"""
from .model import CoefficientModel, TestFunction, TimeGrid, derived_coeffs, validate
from .rng import RngStream
from .sampling import PathRecord, PathStep, simulate_engine1, simulate_engine2, simulate_killed
from .weights import WeightState, fold_weights, theta

__version__ = "0.1.0"

__all__ = [
    "CoefficientModel", "TestFunction", "TimeGrid", "derived_coeffs", "validate",
    "RngStream", "PathRecord", "PathStep", "simulate_engine1", "simulate_engine2",
    "simulate_killed", "WeightState", "fold_weights", "theta", "__version__",
]
