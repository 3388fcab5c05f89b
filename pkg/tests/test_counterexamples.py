import math

import numpy as np
import pytest

from barrierlab.counterexamples import (build_gradient_blowup, build_smap_counterexample,
                                        constant_solution, ode_residual)
from barrierlab.exceptions import DomainError, KinkPoint, NotACounterexample
from barrierlab.nonlinearity import GrowthFunction

SQRT = GrowthFunction.power_law(0.5)
CUBE = GrowthFunction.power_law(3)


@pytest.fixture(scope="module")
def H():
    return build_smap_counterexample(SQRT)


@pytest.fixture(scope="module")
def H_even():
    return build_smap_counterexample(SQRT, extend=True)


def test_H_closed_form(H):
    # x = 2 sqrt(h) => h = x^2/4, H = 1 - x^3/12
    x = np.linspace(0, 1, 101)
    np.testing.assert_allclose(H.value(x), 1 - x ** 3 / 12, atol=1e-12)
    np.testing.assert_allclose(H.derivative(x), -x ** 2 / 4, atol=1e-12)
    assert float(H.value(0.5)) == pytest.approx(1 - 0.125 / 12, abs=1e-12)
    assert float(H.value(-0.5)) == 1.0


def test_H_shape(H):
    x = np.linspace(-0.999, 0.999, 2001)
    v = H.value(x)
    assert np.all(v[x <= 0] == 1.0)
    assert np.all(np.diff(v[x >= 0]) <= 0)
    assert v.min() < 1.0


def test_H_even_extension_is_c1(H_even):
    d = H_even.derivative(np.array([-1 - 1e-9, -1 + 1e-9]))
    np.testing.assert_allclose(d, 0, atol=1e-12)
    assert float(H_even.value(-2.5)) == pytest.approx(float(H_even.value(0.5)), abs=1e-14)
    x = np.linspace(-2.9, 0.9, 1001)
    assert ode_residual(H_even, x[(np.abs(x) > 0.01) & (np.abs(x + 2) > 0.01)], step=1e-3) < 1e-4


def test_H_requires_convergent_osgood():
    with pytest.raises(NotACounterexample):
        build_smap_counterexample(GrowthFunction.power_law(1))


def test_H_residual(H):
    assert ode_residual(H, np.arange(0.1, 0.9, 1e-3)) <= 1e-5


def test_residual_refuses_kink(H):
    with pytest.raises(KinkPoint):
        ode_residual(H, np.linspace(-0.5, 0.5, 11))


def test_F_closed_form():
    F = build_gradient_blowup(CUBE, 10.0)
    x = np.linspace(0, 1, 101)
    np.testing.assert_allclose(F.value(x), np.sqrt(2 * x + 0.01) - 0.1, atol=1e-11)
    np.testing.assert_allclose(F.derivative(x), 1 / np.sqrt(2 * x + 0.01), rtol=1e-10)
    assert float(F.value(0.0)) == 0.0
    assert float(F.value(0.5)) == pytest.approx(math.sqrt(1.01) - 0.1, abs=1e-12)
    assert float(F.derivative(0.0)) == pytest.approx(10.0)


def test_F_residual():
    F = build_gradient_blowup(CUBE, 10.0)
    assert ode_residual(F, np.arange(0.1, 0.4, 1e-4)) <= 1e-5


def test_F_requires_phi_b_failure():
    with pytest.raises(NotACounterexample):
        build_gradient_blowup(GrowthFunction.power_law(2), 10.0)
    with pytest.raises(DomainError):
        build_gradient_blowup(CUBE, -1.0)


def test_F_quotient_grows_with_nu():
    q = []
    for nu in (1e2, 1e4, 1e6):
        F = build_gradient_blowup(CUBE, nu, check=False)
        q.append(float(F.value(1e-4)) / 1e-4)
    assert q[0] < q[1] < q[2]
    # bounded by sqrt(2/s) for fixed s
    assert q[2] < math.sqrt(2 / 1e-4)


def test_constant_residual_is_zero():
    c = constant_solution(GrowthFunction.var_exp_log(1))
    assert ode_residual(c, np.linspace(-0.5, 0.5, 11)) == 0.0


def test_csv_header(H):
    text = H.to_csv(5)
    assert text.splitlines()[0] == "x,value,derivative"
    assert len(text.splitlines()) == 6
