import math

import numpy as np
import pytest

from killsens.model import CoefficientModel, TestFunction
from killsens.oracle_analytic import GaussKernelParams, oracle_deriv, oracle_value
from killsens.oracle_pde import PdeGrid, Profile, pde_deriv, solve_dirichlet

BM = CoefficientModel("constant")
TANH = CoefficientModel("tanh-drift")
EXPM = TestFunction("expm")


@pytest.fixture(scope="module")
def brownian_profile():
    return solve_dirichlet(BM, EXPM, 1.0, PdeGrid.for_problem(BM, 1.0, 1.0, 4000, 4000), 1.0)


def test_zero_payoff_gives_zero_profile():
    zero = TestFunction("expm", 0.0, {"scale": 0.0})
    pr = solve_dirichlet(TANH, zero, 1.0, PdeGrid.for_problem(TANH, 1.0, 0.5, 200, 50))
    assert np.all(pr.u == 0.0)


@pytest.mark.parametrize("x", [0.0, 0.25, 0.5, 1.0])
def test_value_matches_analytic(brownian_profile, x):
    assert abs(brownian_profile(x) - oracle_value(EXPM, x, GaussKernelParams()).value) <= 1e-6


@pytest.mark.parametrize("x", [0.0, 0.5, 1.0])
def test_derivative_matches_analytic(brownian_profile, x):
    assert abs(pde_deriv(brownian_profile, x) - oracle_deriv(EXPM, x, GaussKernelParams()).value) <= 1e-5


def test_drifted_constant_matches_analytic():
    m = CoefficientModel("constant", {"b": 0.5})
    pr = solve_dirichlet(m, EXPM, 1.0, PdeGrid.for_problem(m, 1.0, 0.5, 4000, 4000), 0.5)
    prm = GaussKernelParams(mu=0.5)
    assert abs(pr(0.5) - oracle_value(EXPM, 0.5, prm).value) <= 1e-6
    assert abs(pde_deriv(pr, 0.5) - oracle_deriv(EXPM, 0.5, prm).value) <= 1e-5


@pytest.mark.parametrize("theta", [1.0, 0.5])
@pytest.mark.parametrize("f", [EXPM, TestFunction("indicator", 0.0, {"K": 1.0})], ids=lambda f: f.name)
def test_positivity_and_mass_bound(theta, f):
    pr = solve_dirichlet(TANH, f, 1.0, PdeGrid.for_problem(TANH, 1.0, 0.5, 800, 800, theta=theta))
    assert pr.u.min() >= -1e-14
    assert np.abs(pr.u).max() <= 1.0 + 1e-12


def test_boundary_pinned():
    pr = solve_dirichlet(TANH, EXPM, 1.0, PdeGrid.for_problem(TANH, 1.0, 0.5, 400, 100))
    assert pr.u[0] == 0.0 and pr.boundary_trace == 0.0 and pr.L == TANH.L


def test_self_convergence_order():
    vals = []
    for nx in (250, 500, 1000, 2000):
        pr = solve_dirichlet(TANH, EXPM, 1.0, PdeGrid.for_problem(TANH, 1.0, 0.5, nx, nx), 0.5)
        vals.append(pr(0.5))
    gaps = np.abs(np.diff(vals))
    orders = np.log2(gaps[:-1] / gaps[1:])
    assert np.all(orders >= 1.8)


def test_linear_profile_derivative_exact():
    x = np.linspace(2.0, 12.0, 501)
    pr = Profile(x, 3.7 * (x - 2.0), 1.0)
    for pt in (2.0, 2.013, 5.0, x[-3]):
        assert abs(pde_deriv(pr, pt) - 3.7) <= 1e-12


def test_derivative_stencil_is_fourth_order():
    errs = []
    for dx in (0.1, 0.05, 0.025):
        xs = np.arange(0.0, 10.0 + dx / 2, dx)
        pr = Profile(xs, np.sin(xs), 1.0)
        errs.append([pde_deriv(pr, 1.0) - math.cos(1.0), pde_deriv(pr, 0.0) - 1.0])
    errs = np.abs(errs)
    ratios = errs[:-1] / errs[1:]
    assert np.all((ratios > 12) & (ratios < 20))


def test_derivative_domain():
    pr = Profile(np.linspace(0, 1, 11), np.zeros(11), 1.0)
    with pytest.raises(ValueError):
        pde_deriv(pr, -0.01)
    with pytest.raises(ValueError):
        pde_deriv(pr, 0.95)


def test_grid_guards():
    with pytest.raises(ValueError, match="too small"):
        solve_dirichlet(TANH, EXPM, 1.0, PdeGrid(TANH.L + 3.0, 200, 50), 0.5)
    with pytest.raises(ValueError, match="Peclet"):
        m = CoefficientModel("constant", {"b": 0.9, "sigma": 0.1})
        solve_dirichlet(m, EXPM, 1.0, PdeGrid(m.L + 12.0, 50, 50))
    with pytest.raises(ValueError):
        PdeGrid(10.0, 100, 10, theta=0.3)
    with pytest.raises(ValueError):
        PdeGrid(10.0, 3, 10)


def test_profile_csv(tmp_path):
    pr = solve_dirichlet(TANH, EXPM, 1.0, PdeGrid.for_problem(TANH, 1.0, 0.5, 100, 20))
    pr.to_csv(tmp_path / "u.csv")
    back = np.loadtxt(tmp_path / "u.csv", delimiter=",", skiprows=1)
    assert np.array_equal(back[:, 0], pr.x) and np.array_equal(back[:, 1], pr.u)
