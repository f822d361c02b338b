import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from killsens.model import CoefficientModel, TestFunction, TimeGrid, derived_coeffs, validate

REGISTRY = [CoefficientModel("constant", {"b": 0.5}), CoefficientModel("tanh-drift"),
            CoefficientModel("bounded-rational"), CoefficientModel("tanh-drift", {"L": -1.0, "s1": -0.5})]


def test_constant_model_derived():
    d = derived_coeffs(CoefficientModel("constant", {"b": 0.5, "sigma": 1.0}), 3.7)
    assert tuple(d) == (0.5, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.5, 0.0)


def test_zero_drift_derived():
    d = derived_coeffs(CoefficientModel("constant", {"b": 0.0, "sigma": 2.0}), 1.0)
    assert d.bbar == 0.0 and d.boa == 0.0 and d.dboa == 0.0
    assert d.a == 4.0


@pytest.mark.parametrize("model", REGISTRY[1:3], ids=lambda m: m.name)
def test_derivatives_match_central_differences(model):
    h = 1e-5
    x = model.L + 1.0
    d = derived_coeffs(model, x)
    lo, hi = derived_coeffs(model, x - h), derived_coeffs(model, x + h)
    assert abs((hi.b - lo.b) / (2 * h) - d.db) <= 1e-8
    assert abs((hi.sigma - lo.sigma) / (2 * h) - d.dsigma) <= 1e-8
    assert abs((hi.a - lo.a) / (2 * h) - d.da) <= 1e-8
    assert abs((hi.boa - lo.boa) / (2 * h) - d.dboa) <= 1e-8


@settings(max_examples=200, deadline=None)
@given(st.sampled_from(REGISTRY), st.floats(0.0, 30.0))
def test_algebraic_identities(model, off):
    x = model.L + off
    d = derived_coeffs(model, x)
    assert d.a == d.sigma ** 2
    assert d.da == 2 * d.sigma * d.dsigma
    assert math.isclose(d.dboa, (d.db * d.a - d.b * d.da) / d.a ** 2, rel_tol=1e-14, abs_tol=1e-15)
    assert math.isclose(d.bbar, d.db - d.dsigma * d.b / d.sigma, rel_tol=1e-14, abs_tol=1e-15)
    assert derived_coeffs(model, x) == d  # pure


@pytest.mark.parametrize("model", REGISTRY, ids=lambda m: f"{m.name}:{m.L}")
def test_registry_models_admissible_on_dense_grid(model):
    probe = np.linspace(model.L, model.L + 20, 1000)
    f = TestFunction("expm", model.L)
    assert validate(model, f, probe) == []


def test_expm_passes_boundary_condition():
    f = TestFunction("expm", 0.0)
    assert f(0.0) == 0.0
    assert validate(CoefficientModel("constant"), f, [0.0, 1.0]) == []


def test_nonzero_boundary_value_reported():
    # 1_{y > -1} is identically 1 on [0, inf)
    f = TestFunction("indicator", 0.0, {"K": -1.0})
    report = validate(CoefficientModel("constant"), f, [0.0, 1.0])
    assert any("f(L)=0 violated" in r for r in report)


def test_degenerate_diffusion_reported():
    # sigma(x) = (x - L) / (1 + (x - L)^2) vanishes at L
    m = CoefficientModel("bounded-rational", {"s0": 0.0, "s1": 1.0, "b0": 0.0, "b1": 0.0})
    report = validate(m, TestFunction("expm", 0.0), np.linspace(0, 2, 11))
    assert any("ellipticity" in r for r in report)


def test_validate_rejects_bad_probe_grid():
    m, f = CoefficientModel("constant"), TestFunction("expm")
    with pytest.raises(ValueError):
        validate(m, f, [])
    with pytest.raises(ValueError):
        validate(m, f, [-1.0])


def test_payoffs():
    f = TestFunction("smoothstep", 1.0, {"width": 2.0})
    assert f(1.0) == 0.0 and f(3.0) == 1.0 and f(10.0) == 1.0
    assert f.deriv(1.0) == 0.0 and f.deriv(3.0) == 0.0
    assert math.isclose(f(2.0), 0.5)
    g = TestFunction("indicator", 0.0, {"K": 1.0})
    assert not g.smooth and g(1.0) == 0.0 and g(1.0 + 1e-12) == 1.0
    with pytest.raises(ValueError):
        g.deriv(2.0)
    e = TestFunction("expm", 0.0, {"scale": 2.0})
    ys = np.linspace(0, 5, 7)
    assert np.allclose(e(ys), 2 * (1 - np.exp(-ys)), rtol=0, atol=1e-15)
    assert np.allclose(e.deriv(ys), 2 * np.exp(-ys), rtol=0, atol=1e-15)


def test_unknown_names_and_params():
    with pytest.raises(ValueError):
        CoefficientModel("cubic")
    with pytest.raises(ValueError):
        CoefficientModel("constant", {"mu": 1.0})
    with pytest.raises(ValueError):
        TestFunction("ramp")


def test_time_grid():
    g = TimeGrid(1.0, 4)
    assert g.dt == 0.25
    assert np.array_equal(g.times, [0, 0.25, 0.5, 0.75, 1.0])
    with pytest.raises(ValueError):
        TimeGrid(2.0, 1)  # step above 1
    with pytest.raises(ValueError):
        TimeGrid(0.0, 4)
    assert TimeGrid(1.0, 0).dt == 0.0
