import math
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from killsens.identity_checks import (IBP_TESTS, TOL_IBP, TOL_KERNEL, TOL_MOMENTS, TOL_PUSHFORWARD,
                                      check_ibp, check_kernel_symmetry, check_moments,
                                      check_pushforward_one_step, default_suite, killed_one_step,
                                      moment_closed_form, moment_two_integral, zquad)
from killsens.model import CoefficientModel, TestFunction

BM = CoefficientModel("constant")
TANH = CoefficientModel("tanh-drift")
EXPM = TestFunction("expm")


def test_zquad_exact_on_polynomials_and_gaussian():
    assert zquad(lambda z: z ** 3 - z, -1.0, 2.0) == pytest.approx(2.25, abs=1e-14)
    v = zquad(lambda z: np.exp(-0.5 * z * z) / math.sqrt(2 * math.pi), -40, 40)
    assert v == pytest.approx(1.0, abs=1e-15)
    assert zquad(lambda z: z, 1.0, 1.0) == 0.0


def test_zquad_node_doubling_is_converged():
    f = lambda z: np.exp(-0.5 * z * z) * np.cos(3 * z) * (z > 0.7)
    a = zquad(f, -40, 40, (0.7,))
    b = zquad(f, -40, 40, (0.7,), panels=192)
    assert abs(a - b) < 1e-12


def test_pushforward_brownian_interior():
    r = check_pushforward_one_step(BM, EXPM, 0.3, 0.01)
    assert abs(r.residual) <= 1e-8


def test_pushforward_at_boundary():
    for m in (BM, TANH):
        r = check_pushforward_one_step(m, EXPM, m.L, 0.01)
        assert abs(r.residual) <= TOL_PUSHFORWARD


@pytest.mark.parametrize("dt", [1e-2, 1e-3])
@pytest.mark.parametrize("c", [0.1, 1.0, 10.0])
def test_pushforward_tanh(c, dt):
    x = TANH.L + c * math.sqrt(dt) * TANH.sigma(TANH.L)
    assert check_pushforward_one_step(TANH, EXPM, x, dt).passed


def test_pushforward_kinked_payoff():
    f = TestFunction("smoothstep", 0.0, {"width": 0.4})
    assert check_pushforward_one_step(TANH, f, 0.2, 0.01).passed


def test_pushforward_rejects_bad_inputs():
    with pytest.raises(ValueError):
        check_pushforward_one_step(BM, EXPM, -0.1, 0.01)
    with pytest.raises(ValueError):
        check_pushforward_one_step(BM, TestFunction("indicator"), 0.5, 0.01)
    with pytest.raises(ValueError):
        check_pushforward_one_step(BM, TestFunction("indicator", 0.0, {"K": -1.0}), 0.5, 0.01)


def test_killed_one_step_far_from_boundary_is_plain_expectation():
    # E[1 - e^{-(x + Z sqrt dt)}] = 1 - e^{-x + dt/2}
    v = killed_one_step(BM, EXPM, 5.0, 0.01)
    assert v == pytest.approx(1 - math.exp(-5.0 + 0.005), abs=1e-13)


def test_moment_zero_is_one():
    for u in (0.0, 0.5, 3.0):
        assert moment_two_integral(0, u, 0.01) == pytest.approx(1.0, abs=1e-14)


def test_moment_two_at_boundary_is_dt():
    assert moment_two_integral(2, 0.0, 0.01) == pytest.approx(0.01, abs=1e-16)
    assert moment_closed_form(2, 0.0, 0.01) == 0.01


def test_moment_one_example():
    assert moment_closed_form(1, 1.0, 0.01) == pytest.approx(0.01666310, abs=1e-8)
    assert moment_two_integral(1, 1.0, 0.01) == pytest.approx(moment_closed_form(1, 1.0, 0.01), abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 8), st.floats(0.3, 3), st.sampled_from([1e-2, 1e-3, 1e-4]))
def test_moments_all_states(c, sigma, dt):
    x = c * sigma * math.sqrt(dt)
    for r in check_moments(x, sigma, dt):
        assert abs(r.residual) <= TOL_MOMENTS, r


def test_moment_closed_form_domain():
    with pytest.raises(ValueError):
        moment_closed_form(3, 0.0, 0.01)


def test_ibp_unit_g_constant_model():
    G, dG = IBP_TESTS["[G=1]"]
    r = check_ibp(CoefficientModel("constant", {"b": 0.5}), G, dG, 0.05, 0.01)
    assert abs(r.residual) <= 1e-10


def test_ibp_linear_g_tanh():
    G, dG = IBP_TESTS["[G=w]"]
    for x in (0.0, 0.03, 0.3, 1.0):
        assert abs(check_ibp(TANH, G, dG, x, 0.01).residual) <= TOL_IBP


def test_ibp_drift_term_vanishes_without_drift():
    G, dG = IBP_TESTS["[G=1]"]
    r = check_ibp(CoefficientModel("constant", {"sigma": 1.3}), G, dG, 0.2, 0.01)
    assert r.rhs == 0.0
    assert abs(r.lhs) <= 1e-10


def test_kernel_symmetry_diagonal_and_grids():
    r = check_kernel_symmetry(1.0, 1.0, 0.0)
    assert r.residual <= TOL_KERNEL
    assert check_kernel_symmetry(2.0, 1.0, 0.0).residual <= TOL_KERNEL
    assert check_kernel_symmetry(1.0, 0.3, -2.0, npts=2, width=0.0).residual == 0.0


def test_report_row():
    r = check_kernel_symmetry()
    row = r.as_row()
    assert row["passed"] is True and row["identity"] == "kernel_symmetry"


def test_default_suite_passes_quickly():
    t0 = time.perf_counter()
    reports = default_suite()
    elapsed = time.perf_counter() - t0
    assert len(reports) >= 2 * 2 * 6 * 5
    assert {r.model for r in reports if r.identity == "pushforward"} == {"tanh-drift", "bounded-rational"}
    assert all(r.passed for r in reports), [r for r in reports if not r.passed]
    assert elapsed < 30
