"""Explicit one-dimensional solutions showing the integral conditions are sharp.

* ``H`` solves ``H'' + phi(|H'|) = 0`` on (-1, 1), equals 1 on (-1, 0] and is
  nonconstant, so the strong maximum principle fails when the Osgood integral
  converges.
* ``F`` solves the same equation with ``F'(0) = nu``; when the large-gradient
  condition fails, ``F`` stays bounded while its slope at 0 explodes.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from . import _ode
from .exceptions import DomainError, KinkPoint, NotACounterexample
from .nonlinearity import OSGOOD, GrowthFunction, check_integral_condition, check_phi_B

SMAP = "SmapViolator"
BLOWUP = "GradientBlowup"
CONSTANT = "Constant"

KINK_GUARD = 1e-3
INVERSION_TOL = 1e-12

_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)
_LOG_MIN = -745.0


class _LogQuadrature:
    """Cumulative tables of ``int_0^h dt/phi`` and ``int_0^h t/phi dt`` in ``u = log h``."""

    def __init__(self, phi, u_max=50.0, du=0.25):
        self.phi = phi
        u = np.arange(_LOG_MIN, u_max + du, du)
        self.u = u
        head_phi, _ = quad(lambda s: 1.0 / phi.log_ratio(s), -np.inf, u[0], epsabs=0, epsrel=1e-13)
        head_int, _ = quad(lambda s: math.exp(s) / phi.log_ratio(s), -np.inf, u[0],
                           epsabs=0, epsrel=1e-13)
        a, b = u[:-1], u[1:]
        self.Phi = np.concatenate([[head_phi], head_phi + np.cumsum(self._gl(a, b, 0))])
        self.Int = np.concatenate([[head_int], head_int + np.cumsum(self._gl(a, b, 1))])

    def _gl(self, a, b, power):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        s = mid[..., None] + half[..., None] * _GL_X
        with np.errstate(over="ignore", under="ignore"):
            vals = np.exp(power * s) / self.phi.log_ratio(s)
        return half * (vals @ _GL_W)

    def log_h(self, x):
        """Solve ``int_0^h dt/phi = x`` for ``log h`` (Newton with bisection safeguard)."""
        x = np.asarray(x, dtype=float)
        if np.any(x > self.Phi[-1]):
            raise DomainError("x beyond the range where h stays finite")
        k = np.clip(np.searchsorted(self.Phi, x, side="right") - 1, 0, len(self.u) - 2)
        lo, hi = self.u[k], self.u[k + 1]
        base = self.Phi[k]
        v = 0.5 * (lo + hi)
        for _ in range(100):
            g = base + self._gl(self.u[k], v, 0) - x
            lo = np.where(g < 0, v, lo)
            hi = np.where(g >= 0, v, hi)
            step = g * self.phi.log_ratio(v)
            nxt = v - step
            nxt = np.where((nxt <= lo) | (nxt >= hi), 0.5 * (lo + hi), nxt)
            done = np.abs(nxt - v) <= INVERSION_TOL * np.maximum(1.0, np.abs(v))
            v = nxt
            if np.all(done):
                break
        return np.where(x <= self.Phi[0], -np.inf, v)

    def integral(self, log_h):
        """``int_0^h t / phi(t) dt``."""
        log_h = np.asarray(log_h, dtype=float)
        k = np.clip(np.searchsorted(self.u, log_h, side="right") - 1, 0, len(self.u) - 2)
        out = self.Int[k] + self._gl(self.u[k], np.where(np.isfinite(log_h), log_h, self.u[k]), 1)
        return np.where(np.isfinite(log_h), out, 0.0)


@dataclass(frozen=True, eq=False)
class CounterexampleFunction:
    """Tabulated solution of ``u'' + phi(|u'|) = 0`` with analytic value/derivative evaluation."""

    kind: str
    phi: GrowthFunction
    interval: tuple
    nu: float = None
    eps: float = None
    extension: str = "none"
    level: float = 1.0
    _impl: object = field(default=None, repr=False)

    def value(self, x):
        x = self._check(x)
        if self.kind == CONSTANT:
            return np.full_like(x, self.level)
        if self.kind == BLOWUP:
            return self._impl.integral(x)
        y = self._fold(x)
        lh = self._impl.log_h(np.maximum(y, 0.0))
        return np.where(y > 0, 1.0 - self._impl.integral(lh), 1.0)

    def derivative(self, x):
        x = self._check(x)
        if self.kind == CONSTANT:
            return np.zeros_like(x)
        if self.kind == BLOWUP:
            return self._impl.value(x)
        y = self._fold(x)
        with np.errstate(under="ignore"):
            h = np.where(y > 0, np.exp(self._impl.log_h(np.maximum(y, 0.0))), 0.0)
        return np.where(x < -1.0, h, -h)

    def _fold(self, x):
        return np.where(x < -1.0, -2.0 - x, x) if self.extension == "even" else x

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        a, b = self.interval
        if np.any((x < a) | (x > b)):
            raise DomainError(f"evaluation outside [{a:g}, {b:g}]")
        return x

    @property
    def kinks(self):
        if self.kind != SMAP:
            return ()
        return (0.0, -2.0) if self.extension == "even" else (0.0,)

    def samples(self, n=2001):
        a, b = self.interval
        x = np.linspace(a, b, n)
        return x, self.value(x), self.derivative(x)

    def to_csv(self, n=2001):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "value", "derivative"])
        for row in zip(*self.samples(n)):
            w.writerow(["%.17g" % v for v in row])
        return buf.getvalue()


def build_smap_counterexample(phi, extend=False, check=True):
    """``H = 1 - int_0^x h`` with ``x = int_0^h dt/phi``, on (-1, 1) or evenly on (-3, 1)."""
    if check and check_integral_condition(phi, OSGOOD).holds:
        raise NotACounterexample("Osgood integral diverges: the strong maximum principle holds")
    impl = _LogQuadrature(phi)
    interval = (-3.0, 1.0) if extend else (-1.0, 1.0)
    return CounterexampleFunction(SMAP, phi, interval, extension="even" if extend else "none",
                                  _impl=impl)


def build_gradient_blowup(phi, nu, eps=1.0, check=True):
    """``F = int_0^x f`` with ``f' = -phi(f)``, ``f(0) = nu``, on [0, eps]."""
    if not (nu > 0 and eps > 0):
        raise DomainError("need nu > 0 and eps > 0")
    if check and check_phi_B(phi, eps=eps).holds:
        raise NotACounterexample("phi satisfies the large-gradient condition")
    # near-relative control on the running integral keeps F accurate at x ~ 1/nu^2
    sol = _ode.integrate_decay(phi, 1.0, nu, eps, rtol=1e-12, atol=[1e-14, 1e-30])
    if sol.t_end < eps:
        raise DomainError(f"f vanishes at x = {sol.t_end:.6g} < eps")
    return CounterexampleFunction(BLOWUP, phi, (0.0, float(eps)), nu=float(nu), eps=float(eps),
                                  _impl=sol)


def constant_solution(phi, level=1.0, interval=(-1.0, 1.0)):
    """A constant, which solves the equation whenever ``phi(0) = 0``."""
    return CounterexampleFunction(CONSTANT, phi, tuple(interval), level=float(level))


def ode_residual(c, grid, step=None):
    """Max of ``|D2 u + phi(|D1 u|)|`` with central differences of width ``step``.

    ``step`` defaults to the smallest spacing of ``grid``.
    """
    grid = np.asarray(grid, dtype=float)
    if step is None:
        step = float(np.min(np.diff(np.sort(grid)))) if grid.size > 1 else 1e-3
    for k in c.kinks:
        if np.any(np.abs(grid - k) < KINK_GUARD + step):
            raise KinkPoint(f"grid reaches the kink at x = {k:g}")
    up, mid, dn = c.value(grid + step), c.value(grid), c.value(grid - step)
    d2 = (up - 2 * mid + dn) / step ** 2
    d1 = (up - dn) / (2 * step)
    return float(np.max(np.abs(d2 + c.phi(np.abs(d1)))))
