"""Finite differences for -div(|Du|^(p(x)-2) Du) = a |u|^(q(x)-2) u + f with Dirichlet data.

The flux on each grid edge uses the weight ``(|Du|^2 + eps^2)^((p - 2)/2)``
at the edge midpoint, with ``|Du|^2`` built from the edge difference and the
average of the nodal transverse derivatives.  Edges that hit the boundary are
cut at the crossing point (Shortley-Weller), so near-boundary rows are not
symmetric and each frozen system is solved with a sparse LU factorization.
"""

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CloughTocher2DInterpolator
from scipy.sparse.linalg import eigs, spsolve
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import DomainError, HypothesisError, MonotonicityWarning, NonConvergence
from .geometry import DIRECTIONS, make_grid

OPPOSITE = np.array([1, 0, 3, 2])
# index of the transverse axis (0 = x, 1 = y) for each direction
TRANSVERSE = np.array([1, 1, 0, 0])
MIN_DAMPING = 2.0 ** -12


def _field(spec, x):
    """Evaluate a constant or a callable of ``(m, 2)`` points at ``x``."""
    if callable(spec):
        return np.broadcast_to(np.asarray(spec(x), dtype=float), x.shape[:-1]).copy()
    return np.full(x.shape[:-1], float(spec))


@dataclass(frozen=True)
class ExponentField:
    """Exponents ``p(x)``, ``q(x)`` and the reaction coefficient ``a``.

    ``p`` and ``q`` are constants or callables of ``(m, 2)`` point arrays.
    Bounds left as None are measured on the grid by :meth:`check`.
    """

    p: object = 2.0
    q: object = 2.0
    a: float = 0.0
    p_minus: float = None
    p_plus: float = None
    grad_p: float = None
    description: str = ""

    def __post_init__(self):
        if not callable(self.p):
            if not float(self.p) > 1:
                raise DomainError("p must exceed 1")
            for name in ("p_minus", "p_plus"):
                if getattr(self, name) is None:
                    object.__setattr__(self, name, float(self.p))
            if self.grad_p is None:
                object.__setattr__(self, "grad_p", 0.0)
        if not callable(self.q) and float(self.q) < 2:
            raise DomainError("q must be at least 2")

    @property
    def is_constant(self):
        return not callable(self.p) and not callable(self.q)

    def p_at(self, x):
        return _field(self.p, np.asarray(x, dtype=float))

    def q_at(self, x):
        return _field(self.q, np.asarray(x, dtype=float))

    def check(self, grid):
        """Validate bounds at the nodes; returns ``(p_minus, p_plus, lipschitz quotient)``."""
        x = grid.points
        pv, qv = self.p_at(x), self.q_at(x)
        if np.any(qv < 2):
            raise DomainError("q(x) >= 2 violated on the grid")
        lo = pv.min() if self.p_minus is None else self.p_minus
        hi = pv.max() if self.p_plus is None else self.p_plus
        if not (1 < lo <= pv.min() + 1e-12 and pv.max() <= hi + 1e-12):
            raise DomainError(f"p(x) leaves [{lo:g}, {hi:g}] on the grid")
        quot = 0.0
        for d in (0, 2):
            nb = grid.neighbor[:, d]
            ok = nb >= 0
            if np.any(ok):
                quot = max(quot, float(np.max(np.abs(pv[nb[ok]] - pv[ok]))) / grid.h)
        if self.grad_p is not None and quot > self.grad_p * (1 + 1e-6) + 1e-12:
            raise DomainError(f"discrete Lipschitz quotient {quot:.6g} exceeds the declared "
                              f"bound {self.grad_p:g}")
        return float(lo), float(hi), quot

    def to_dict(self):
        desc = self.description or ("constant" if self.is_constant else "callable")
        return {"p": None if callable(self.p) else float(self.p),
                "q": None if callable(self.q) else float(self.q),
                "a": float(self.a), "p_minus": self.p_minus, "p_plus": self.p_plus,
                "grad_p": self.grad_p, "description": desc}


@dataclass(frozen=True)
class SolverConfig:
    eps_reg: float = 1e-8
    tol: float = 1e-8
    max_iter: int = 500
    damping: float = 0.7
    linear_tol: float = 1e-12

    def __post_init__(self):
        if not self.eps_reg > 0:
            raise ValueError("eps_reg must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")


@dataclass(eq=False)
class GridFunction:
    """Values at the grid unknowns plus the Dirichlet data at the boundary crossings."""

    grid: object
    values: np.ndarray
    boundary_points: np.ndarray
    boundary_values: np.ndarray
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_unknowns,):
            raise ValueError("one value per unknown expected")
        if not np.all(np.isfinite(self.values)):
            raise DomainError("grid function values must be finite")
        self._interp = None

    @property
    def points(self):
        return self.grid.points

    def __call__(self, x):
        """Piecewise cubic (Clough-Tocher) interpolant through nodes and boundary data."""
        if self._interp is None:
            pts = np.vstack([self.points, self.boundary_points])
            vals = np.concatenate([self.values, self.boundary_values])
            self._interp = CloughTocher2DInterpolator(pts, vals)
        x = np.asarray(x, dtype=float)
        out = self._interp(np.atleast_2d(x))
        return out if x.ndim > 1 else float(out[0])

    def with_values(self, values):
        return GridFunction(self.grid, values, self.boundary_points, self.boundary_values)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "u"])
        for (x, y), v in zip(self.points, self.values):
            w.writerow(["%.17g" % x, "%.17g" % y, "%.17g" % v])
        return buf.getvalue()

    def metadata(self):
        return json.loads(json.dumps(self.info, default=float))


class _Problem:
    """Frozen geometry, data and exponents on one grid."""

    def __init__(self, grid, exp, boundary, source, eps_reg):
        self.grid, self.exp, self.eps2 = grid, exp, eps_reg ** 2
        h = grid.h
        self.N = grid.n_unknowns
        self.x = grid.points
        self.nb = grid.neighbor
        self.interior_edge = self.nb >= 0
        self.hd = grid.theta * h
        bmask = ~self.interior_edge
        self.bpts = grid.crossing[bmask]
        self.gb = np.zeros((self.N, 4))
        self.gb[bmask] = _field(boundary, self.bpts) if len(self.bpts) else []
        mid = self.x[:, None, :] + 0.5 * self.hd[..., None] * DIRECTIONS[None]
        self.p_mid = exp.p_at(mid.reshape(-1, 2)).reshape(self.N, 4)
        self.q = exp.q_at(self.x)
        self.a = float(exp.a)
        self.f = _field(source, self.x) if not isinstance(source, np.ndarray) else source
        self.hsum = self.hd + self.hd[:, OPPOSITE]
        self.rows = np.repeat(np.arange(self.N), 4).reshape(self.N, 4)
        # dual-cell area attached to each half edge, for the energy
        self.area = 0.5 * self.hsum * 0.5 * (self.hd[:, [2, 2, 0, 0]] + self.hd[:, [3, 3, 1, 1]])

    def neighbor_values(self, u):
        return np.where(self.interior_edge, u[np.maximum(self.nb, 0)], self.gb)

    def edge_gradient_sq(self, u, U=None):
        U = self.neighbor_values(u) if U is None else U
        hd = self.hd
        du = U - u[:, None]
        # nonuniform three-point derivative along each axis
        g = np.empty((self.N, 2))
        for axis, (dp, dm) in enumerate(((0, 1), (2, 3))):
            hp, hm = hd[:, dp], hd[:, dm]
            g[:, axis] = (hm ** 2 * du[:, dp] - hp ** 2 * du[:, dm]) / (hp * hm * (hp + hm))
        tk = g[:, TRANSVERSE]
        # a boundary crossing has no transverse derivative of its own
        tn = np.where(self.interior_edge, g[np.maximum(self.nb, 0), TRANSVERSE[None, :]], tk)
        T = 0.5 * (tk + tn)
        D = du / hd
        return D ** 2 + T ** 2

    def weights(self, u, U=None):
        s = self.edge_gradient_sq(u, U) + self.eps2
        return s ** (0.5 * (self.p_mid - 2.0))

    def coefficients(self, u, U=None):
        return 2.0 * self.weights(u, U) / (self.hd * self.hsum)

    def reaction(self, u):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.q == 2, 1.0, np.abs(u) ** (self.q - 2))

    def residual(self, u):
        U = self.neighbor_values(u)
        c = self.coefficients(u, U)
        return np.sum(c * (u[:, None] - U), axis=1) - self.a * self.reaction(u) * u - self.f

    def energy(self, u):
        s = self.edge_gradient_sq(u) + self.eps2
        dens = s ** (0.5 * self.p_mid) / self.p_mid
        # interior edges are seen from both ends
        share = np.where(self.interior_edge, 0.5, 1.0)
        grad_part = np.sum(share * self.area * dens)
        h2 = self.grid.h ** 2
        react = -self.a / self.q * np.abs(u) ** self.q
        return float(grad_part + h2 * np.sum(react - self.f * u))

    def assemble(self, u, frozen_unit=False):
        """Linear system with weights frozen at ``u`` (or unit weights)."""
        if frozen_unit:
            c = 2.0 / (self.hd * self.hsum)
        else:
            c = self.coefficients(u)
        diag = c.sum(axis=1)
        rhs = self.f + np.sum(np.where(self.interior_edge, 0.0, c * self.gb), axis=1)
        r = self.reaction(u) if not frozen_unit else np.where(self.q == 2, 1.0, 0.0)
        if self.a <= 0:
            diag = diag - self.a * r
        else:
            rhs = rhs + self.a * r * u
        m = self.interior_edge
        A = sp.csr_matrix((np.concatenate([diag, -c[m]]),
                           (np.concatenate([np.arange(self.N), self.rows[m]]),
                            np.concatenate([np.arange(self.N), self.nb[m]]))),
                          shape=(self.N, self.N))
        return A, rhs


def _problem(grid, exp, boundary, source, cfg):
    return _Problem(grid, exp, boundary, 0.0 if source is None else source, cfg.eps_reg)


def smallest_eigenvalue(A):
    """Smallest-magnitude eigenvalue of the frozen operator (shift-invert Arnoldi)."""
    val = eigs(A.tocsc(), k=1, sigma=0.0, which="LM", return_eigenvectors=False)
    return float(np.real(val[0]))


def solve(grid, exp, boundary, source=None, cfg=None, initial=None):
    """Damped Picard iteration; returns a :class:`GridFunction` with the history in ``info``."""
    cfg = cfg or SolverConfig()
    prob = _problem(grid, exp, boundary, source, cfg)
    if initial is None:
        A0, b0 = prob.assemble(np.zeros(prob.N), frozen_unit=True)
        u = spsolve(A0.tocsc(), b0)
    else:
        u = np.array(initial, dtype=float)
    if prob.a > 0:
        A, _ = prob.assemble(u)
        lam = smallest_eigenvalue(A)
        scale = float(np.max(prob.reaction(u)))
        if prob.a * scale > lam:
            warnings.warn(f"a = {prob.a:g} exceeds the smallest eigenvalue estimate {lam:.6g} "
                          "of the frozen operator; the solution may not be unique",
                          MonotonicityWarning, stacklevel=2)
    res = float(np.max(np.abs(prob.residual(u))))
    history, energies, thetas = [res], [prob.energy(u)], []
    it = 0
    while res > cfg.tol:
        if it >= cfg.max_iter:
            raise NonConvergence(f"no convergence in {cfg.max_iter} Picard steps "
                                 f"(residual {res:.3e})", history)
        A, b = prob.assemble(u)
        step = spsolve(A.tocsc(), b) - u
        theta = cfg.damping
        while True:
            trial = u + theta * step
            r_trial = float(np.max(np.abs(prob.residual(trial))))
            if r_trial < res:
                break
            theta *= 0.5
            if theta < MIN_DAMPING:
                raise NonConvergence(f"Picard stagnated at residual {res:.3e}", history)
        u, res = trial, r_trial
        history.append(res)
        energies.append(prob.energy(u))
        thetas.append(theta)
        it += 1
    info = {"iterations": it, "residual": res, "residual_history": history,
            "energy_history": energies, "damping_history": thetas, "h": grid.h,
            "exponents": exp.to_dict(), "eps_reg": cfg.eps_reg}
    return GridFunction(grid, u, prob.bpts, prob.gb[~prob.interior_edge], info)


def residual_norm(u, exp, source=None, boundary=None, eps_reg=1e-8):
    """Max-norm residual over the unknowns; boundary data defaults to that stored in ``u``."""
    grid = u.grid
    prob = _Problem(grid, exp, 0.0, 0.0 if source is None else source, eps_reg)
    if boundary is None:
        prob.gb[~prob.interior_edge] = u.boundary_values
    else:
        prob.gb[~prob.interior_edge] = _field(boundary, prob.bpts)
    return float(np.max(np.abs(prob.residual(u.values))))


def sample(grid, func, boundary=None):
    """Grid function holding ``func`` at the unknowns and (by default) at the crossings."""
    mask = grid.neighbor < 0
    bpts = grid.crossing[mask]
    bvals = _field(func if boundary is None else boundary, bpts)
    return GridFunction(grid, _field(func, grid.points), bpts, bvals)


def energy(u, exp, source=None, eps_reg=1e-8):
    prob = _Problem(u.grid, exp, 0.0, 0.0 if source is None else source, eps_reg)
    prob.gb[~prob.interior_edge] = u.boundary_values
    return prob.energy(u.values)


def radial_reference(p, n=2, r_in=1.0, r_out=2.0, inner=0.0, outer=1.0):
    """Radial p-harmonic function on the annulus with the given boundary values."""
    if not p > 1:
        raise DomainError("p must exceed 1")
    if not r_out > r_in > 0:
        raise DomainError("need r_out > r_in > 0")
    if p == n:
        base = np.log
    else:
        beta = (p - n) / (p - 1)

        def base(rho):
            return np.power(rho, beta)
    b0, b1 = base(r_in), base(r_out)

    def profile(rho):
        rho = np.asarray(rho, dtype=float)
        return inner + (outer - inner) * (base(rho) - b0) / (b1 - b0)
    return profile


@dataclass(frozen=True)
class ComparisonReport:
    min_difference: float
    allowance: float
    h: float
    u: GridFunction = field(repr=False)
    v: GridFunction = field(repr=False)

    @property
    def passed(self):
        return self.min_difference >= -self.allowance

    def to_dict(self):
        return {"min_difference": self.min_difference, "allowance": self.allowance,
                "h": self.h, "passed": self.passed}


def check_weak_comparison(grid, exp, data_u, data_v, cfg=None, allowance_factor=10.0):
    """Solve both Dirichlet problems and report ``min(v - u)`` over the nodes.

    ``data_u`` and ``data_v`` are ``(boundary, source)`` pairs with
    ``g <= g'``, ``f <= f'`` nodewise, and the reaction coefficient must be negative.
    """
    if not exp.a < 0:
        raise HypothesisError("ordering needs a < 0")
    (g, f), (g2, f2) = data_u, data_v
    mask = grid.neighbor < 0
    bpts = grid.crossing[mask]
    if np.any(_field(g, bpts) > _field(g2, bpts)):
        raise HypothesisError("boundary data are not ordered (g <= g')")
    x = grid.points
    f = 0.0 if f is None else f
    f2 = 0.0 if f2 is None else f2
    if np.any(_field(f, x) > _field(f2, x)):
        raise HypothesisError("sources are not ordered (f <= f')")
    u = solve(grid, exp, g, f, cfg)
    v = solve(grid, exp, g2, f2, cfg)
    return ComparisonReport(float(np.min(v.values - u.values)), allowance_factor * grid.h ** 2,
                            grid.h, u, v)


class DirichletSolver(BaseEstimator, RegressorMixin):
    """Estimator wrapper: ``fit`` solves on ``domain`` at spacing ``h``; ``predict`` interpolates.

    ``fit`` ignores ``X`` and ``y``; they exist for pipeline compatibility.
    """

    def __init__(self, domain=None, h=0.05, p=2.0, q=2.0, a=0.0, boundary=0.0, source=0.0,
                 eps_reg=1e-8, tol=1e-8, max_iter=500, damping=0.7):
        self.domain = domain
        self.h = h
        self.p = p
        self.q = q
        self.a = a
        self.boundary = boundary
        self.source = source
        self.eps_reg = eps_reg
        self.tol = tol
        self.max_iter = max_iter
        self.damping = damping

    def fit(self, X=None, y=None):
        if self.domain is None:
            raise ValueError("domain is required")
        self.grid_ = make_grid(self.domain, self.h)
        exp = ExponentField(self.p, self.q, self.a)
        cfg = SolverConfig(self.eps_reg, self.tol, self.max_iter, self.damping)
        self.solution_ = solve(self.grid_, exp, self.boundary, self.source, cfg)
        self.n_iter_ = self.solution_.info["iterations"]
        self.residual_history_ = self.solution_.info["residual_history"]
        return self

    def predict(self, X):
        check_is_fitted(self, "solution_")
        return np.asarray(self.solution_(np.atleast_2d(np.asarray(X, dtype=float))))
