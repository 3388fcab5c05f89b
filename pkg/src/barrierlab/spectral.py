"""Symmetric matrices, their signed-part split, and the Pucci extremal operators."""

import json
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, NumericalError

PLUS = "plus"
MINUS = "minus"


class SymmetricMatrix:
    """Real symmetric matrix stored as its upper triangle."""

    __slots__ = ("n", "_upper")

    def __init__(self, n, upper):
        upper = np.asarray(upper, dtype=float)
        if upper.shape != (n * (n + 1) // 2,):
            raise ValueError(f"expected {n * (n + 1) // 2} upper-triangle entries")
        if not np.all(np.isfinite(upper)):
            raise DomainError("matrix entries must be finite")
        self.n = int(n)
        self._upper = upper.copy()
        self._upper.setflags(write=False)

    @classmethod
    def from_array(cls, a, check=True, atol=1e-12):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("need a square matrix")
        if check and not np.allclose(a, a.T, rtol=0, atol=atol * max(1.0, np.abs(a).max(initial=0))):
            raise DomainError("matrix is not symmetric")
        return cls(a.shape[0], a[np.triu_indices(a.shape[0])])

    @classmethod
    def diag(cls, values):
        return cls.from_array(np.diag(np.asarray(values, dtype=float)))

    @property
    def array(self):
        a = np.zeros((self.n, self.n))
        a[np.triu_indices(self.n)] = self._upper
        return a + np.triu(a, 1).T

    def norm(self):
        return float(np.abs(self._upper).max(initial=0.0))

    def to_json(self):
        return json.dumps(self.array.tolist())

    @classmethod
    def from_json(cls, text):
        return cls.from_array(json.loads(text))

    def __repr__(self):
        return f"SymmetricMatrix({self.array.tolist()})"


@dataclass(frozen=True)
class EllipticityPair:
    lam: float
    Lam: float

    def __post_init__(self):
        if not (self.lam > 0 and self.Lam >= self.lam):
            raise DomainError(f"need 0 < lambda <= Lambda, got {self.lam}, {self.Lam}")


def jacobi_eigh(a, tol=1e-15, max_sweeps=60):
    """Cyclic Jacobi rotations; returns (eigenvalues, eigenvectors as columns)."""
    a = np.array(a, dtype=float)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.abs(a).max(initial=0.0)
    if scale == 0.0:
        return np.zeros(n), v
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    else:
        raise NumericalError("Jacobi iteration did not converge")
    w = np.diag(a).copy()
    order = np.argsort(w)
    return w[order], v[:, order]


def eigenvalues(X):
    """Eigenvalues of a symmetric matrix in ascending order."""
    return jacobi_eigh(X.array)[0]


def split_signed_parts(X):
    """``X = X+ - X-`` with both parts positive semidefinite and ``X+ X- = 0``."""
    w, v = jacobi_eigh(X.array)
    pos = (v * np.maximum(w, 0.0)) @ v.T
    neg = (v * np.maximum(-w, 0.0)) @ v.T
    return (SymmetricMatrix.from_array(0.5 * (pos + pos.T), check=False),
            SymmetricMatrix.from_array(0.5 * (neg + neg.T), check=False))


def pucci_from_eigenvalues(eigs, ell, sign, norm=None):
    """Pucci operator from eigenvalues along the last axis (vectorised).

    Eigenvalues with ``|e| < 1e-13 * norm`` count as nonnegative.
    """
    e = np.asarray(eigs, dtype=float)
    if norm is None:
        norm = np.abs(e).max(axis=-1, keepdims=True)
    nonneg = e >= -1e-13 * norm
    pos = np.where(nonneg, e, 0.0).sum(axis=-1)
    neg = np.where(nonneg, 0.0, e).sum(axis=-1)
    if sign == PLUS:
        return -ell.lam * pos - ell.Lam * neg
    if sign == MINUS:
        return -ell.Lam * pos - ell.lam * neg
    raise ValueError(f"sign must be {PLUS!r} or {MINUS!r}")


def pucci(X, ell, sign):
    """``P+ = -lam tr(X+) + Lam tr(X-)`` and ``P- = -Lam tr(X+) + lam tr(X-)``."""
    return float(pucci_from_eigenvalues(eigenvalues(X), ell, sign, norm=X.norm()))
