import math

import numpy as np
import pytest
from scipy.integrate import quad

from barrierlab.exceptions import DomainError, InvalidNonlinearity
from barrierlab.nonlinearity import (KELLER_OSSERMAN, OSGOOD, GrowthFunction,
                                     check_integral_condition, check_phi_B, dominates_identity,
                                     eval_phi, phi_b_integral, power_law_closed_form)


def test_eval_phi_examples():
    assert eval_phi(GrowthFunction.power_law(1), 0.5) == 0.5
    assert eval_phi(GrowthFunction.var_exp_log(1), 1.0) == pytest.approx(1.0, abs=1e-15)
    assert eval_phi(GrowthFunction.var_exp_log(1), math.exp(-1)) == pytest.approx(2 * math.exp(-1), rel=1e-14)
    assert eval_phi(GrowthFunction.var_exp_log(1), 0.0) == 0.0


@pytest.mark.parametrize("t", [-1.0, math.nan, math.inf])
def test_eval_phi_rejects(t):
    with pytest.raises(DomainError):
        eval_phi(GrowthFunction.power_law(2), t)


@pytest.mark.parametrize("phi", [GrowthFunction.power_law(1), GrowthFunction.power_law(1, 2.0),
                                 GrowthFunction.var_exp_log(1.5),
                                 GrowthFunction.tabulated([0, 0.5, 1, 2], [0, 0.8, 1.5, 4])])
def test_monotone_and_dominates_identity(phi):
    t = np.linspace(1e-6, 1.0, 5001)
    v = phi(t)
    assert np.all(np.diff(v) > 0)
    assert np.all(np.isfinite(v)) and np.all(v >= 0)
    assert dominates_identity(phi)


def test_tabulated_rejects_bad_tables_and_extrapolation():
    with pytest.raises(InvalidNonlinearity):
        GrowthFunction.tabulated([0, 1, 2], [0, 2, 1])
    phi = GrowthFunction.tabulated([0, 1], [0, 1])
    with pytest.raises(DomainError):
        phi(1.5)


def test_json_round_trip():
    for phi in (GrowthFunction.power_law(2.5, 3.0), GrowthFunction.var_exp_log(2.0)):
        back = GrowthFunction.from_dict(phi.to_dict())
        t = np.linspace(0, 3, 7)
        np.testing.assert_array_equal(back(t), phi(t))


def test_osgood_examples():
    assert check_integral_condition(GrowthFunction.power_law(1), OSGOOD).verdict == "Divergent"
    assert check_integral_condition(GrowthFunction.var_exp_log(1), OSGOOD).verdict == "Divergent"
    v = check_integral_condition(GrowthFunction.power_law(0.5), OSGOOD)
    assert v.verdict == "Convergent"
    # antiderivative 2 sqrt(t)
    assert abs(v.limit - 2.0) <= max(v.error, 1e-8)
    assert v.error < 1e-6


def test_keller_osserman_examples():
    v = check_integral_condition(GrowthFunction.power_law(3), KELLER_OSSERMAN)
    assert v.verdict == "Convergent"
    assert v.limit == pytest.approx(0.5, rel=1e-8)
    assert check_integral_condition(GrowthFunction.power_law(1), KELLER_OSSERMAN).verdict == "Divergent"
    assert check_integral_condition(GrowthFunction.var_exp_log(1), KELLER_OSSERMAN).verdict == "Divergent"


def test_osgood_limit_ordering():
    # phi1 <= phi2 pointwise on (0, 1]: the larger phi has the smaller limit
    small = check_integral_condition(GrowthFunction.power_law(0.5), OSGOOD)
    large = check_integral_condition(GrowthFunction.power_law(0.5, 2.0), OSGOOD)
    assert small.verdict == large.verdict == "Convergent"
    assert large.limit <= small.limit
    assert large.limit == pytest.approx(1.0, rel=1e-8)


def test_closed_form_examples():
    assert power_law_closed_form(1, 1, 10) == pytest.approx(10 * (1 - math.exp(-1)), rel=1e-14)
    assert power_law_closed_form(2, 1, 10) == pytest.approx(math.log(11), rel=1e-14)
    # f = (2t + 1)^(-1/2); int_0^1 f = sqrt(3) - 1
    assert power_law_closed_form(3, 1, 1) == pytest.approx(math.sqrt(3) - 1, rel=1e-14)


@pytest.mark.parametrize("k", [1.0, 1.5, 2.0, 3.0])
@pytest.mark.parametrize("nu", [0.5, 10.0, 1e4])
def test_closed_form_matches_quadrature_of_exact_f(k, nu):
    if k == 1:
        f = lambda t: nu * math.exp(-t)
    else:
        f = lambda t: ((k - 1) * t + nu ** (1 - k)) ** (1 / (1 - k))
    # f is sharply peaked at 0 for large nu
    exact = quad(f, 0, 1, epsabs=0, epsrel=1e-13, limit=400, points=[1e-8, 1e-6, 1e-4, 1e-2])[0]
    assert power_law_closed_form(k, 1.0, nu) == pytest.approx(exact, rel=1e-10)
    assert phi_b_integral(GrowthFunction.power_law(k), 1.0, nu) == pytest.approx(exact, rel=1e-8)


def test_phi_b_examples():
    assert check_phi_B(GrowthFunction.power_law(1)).verdict == "Holds"
    assert check_phi_B(GrowthFunction.power_law(2)).verdict == "Holds"
    v = check_phi_B(GrowthFunction.power_law(3))
    assert v.verdict == "Fails"
    # plateau int_0^1 (2t)^(-1/2) dt = sqrt(2)
    assert v.limit == pytest.approx(math.sqrt(2), rel=1e-3)


def test_phi_b_schedule_validation():
    with pytest.raises(ValueError):
        check_phi_B(GrowthFunction.power_law(1), nu_schedule=[1, 10, 5, 100, 1e3, 1e4])
    with pytest.raises(DomainError):
        check_phi_B(GrowthFunction.power_law(1), eps=0)


def test_verdict_serializes():
    d = check_integral_condition(GrowthFunction.power_law(0.5), OSGOOD).to_dict()
    assert d["verdict"] == "Convergent" and isinstance(d["diagnostics"], list)
