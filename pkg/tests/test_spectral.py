import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from barrierlab.exceptions import DomainError
from barrierlab.spectral import (MINUS, PLUS, EllipticityPair, SymmetricMatrix, eigenvalues, pucci,
                                 split_signed_parts)

ELL = EllipticityPair(1.0, 2.0)


def test_eigenvalue_examples():
    np.testing.assert_allclose(eigenvalues(SymmetricMatrix.diag([3, 1, 2])), [1, 2, 3])
    np.testing.assert_allclose(eigenvalues(SymmetricMatrix.from_array([[0, 1], [1, 0]])), [-1, 1])
    np.testing.assert_array_equal(eigenvalues(SymmetricMatrix.from_array(np.zeros((4, 4)))), np.zeros(4))


def test_non_finite_rejected():
    with pytest.raises(DomainError):
        SymmetricMatrix.from_array([[np.nan, 0], [0, 1]])
    with pytest.raises(DomainError):
        SymmetricMatrix.from_array([[0, 1], [2, 0]])
    with pytest.raises(DomainError):
        EllipticityPair(2.0, 1.0)


def test_split_examples():
    Xp, Xm = split_signed_parts(SymmetricMatrix.diag([2, -3]))
    np.testing.assert_allclose(Xp.array, np.diag([2, 0]), atol=1e-15)
    np.testing.assert_allclose(Xm.array, np.diag([0, 3]), atol=1e-15)
    Xp, Xm = split_signed_parts(SymmetricMatrix.from_array([[0, 1], [1, 0]]))
    assert np.trace(Xp.array) == pytest.approx(1) and np.trace(Xm.array) == pytest.approx(1)
    A = SymmetricMatrix.from_array([[2.0, 0.5], [0.5, 1.0]])
    Xp, Xm = split_signed_parts(A)
    np.testing.assert_allclose(Xp.array, A.array, atol=1e-14)
    np.testing.assert_allclose(Xm.array, 0, atol=1e-14)


def test_pucci_examples():
    I2 = SymmetricMatrix.diag([1, 1])
    assert pucci(I2, ELL, PLUS) == -2
    assert pucci(I2, ELL, MINUS) == -4
    assert pucci(SymmetricMatrix.diag([1, -1]), ELL, PLUS) == 1


def test_json_round_trip():
    X = SymmetricMatrix.from_array([[1.0, 2.0], [2.0, -3.0]])
    np.testing.assert_array_equal(SymmetricMatrix.from_json(X.to_json()).array, X.array)


sym = st.integers(1, 6).flatmap(
    lambda n: arrays(np.float64, (n, n), elements=st.floats(-1e3, 1e3, allow_nan=False))
).map(lambda a: SymmetricMatrix.from_array(np.triu(a) + np.triu(a, 1).T))
ells = st.tuples(st.floats(0.1, 5), st.floats(1, 4)).map(lambda t: EllipticityPair(t[0], t[0] * t[1]))


@settings(max_examples=200, deadline=None)
@given(sym)
def test_eigenvalues_match_lapack(X):
    ref = np.linalg.eigvalsh(X.array)
    np.testing.assert_allclose(eigenvalues(X), ref, atol=1e-12 * max(X.norm(), 1) * X.n)


@settings(max_examples=200, deadline=None)
@given(sym)
def test_split_reconstructs(X):
    Xp, Xm = split_signed_parts(X)
    scale = max(X.norm(), 1.0)
    np.testing.assert_allclose(Xp.array - Xm.array, X.array, atol=1e-12 * scale * X.n)
    assert np.abs(Xp.array @ Xm.array).max() <= 1e-10 * scale ** 2
    assert np.linalg.eigvalsh(Xp.array).min() >= -1e-12 * scale * X.n
    assert np.linalg.eigvalsh(Xm.array).min() >= -1e-12 * scale * X.n


@settings(max_examples=200, deadline=None)
@given(sym, ells, st.floats(0, 100))
def test_pucci_properties(X, ell, c):
    tol = 1e-10 * max(X.norm(), 1.0) * (ell.Lam + 1) * X.n
    lo, hi = pucci(X, ell, MINUS), pucci(X, ell, PLUS)
    assert lo <= hi + tol
    neg = SymmetricMatrix.from_array(-X.array)
    assert hi == pytest.approx(-pucci(neg, ell, MINUS), abs=tol)
    cX = SymmetricMatrix.from_array(c * X.array)
    assert pucci(cX, ell, PLUS) == pytest.approx(c * hi, abs=tol * max(c, 1))
    same = EllipticityPair(ell.lam, ell.lam)
    assert pucci(X, same, PLUS) == pytest.approx(pucci(X, same, MINUS), abs=tol)


def test_pucci_matches_signed_trace_formula():
    rng = np.random.default_rng(7)
    for _ in range(100):
        a = rng.normal(size=(3, 3))
        X = SymmetricMatrix.from_array(a + a.T)
        Xp, Xm = split_signed_parts(X)
        tp, tm = np.trace(Xp.array), np.trace(Xm.array)
        e = np.linalg.eigvalsh(X.array)
        assert tp == pytest.approx(e[e >= 0].sum(), abs=1e-12)
        assert pucci(X, ELL, PLUS) == pytest.approx(-ELL.lam * tp + ELL.Lam * tm, abs=1e-12)
        assert pucci(X, ELL, MINUS) == pytest.approx(-ELL.Lam * tp + ELL.lam * tm, abs=1e-12)
