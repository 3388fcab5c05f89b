"""Ball-condition domains in the plane, their signed distance and finite-difference grids.

Nodes sit at ``center + h * (i, j)`` so grids are symmetric about the shape.
Interior nodes next to the boundary record where each of their four axis
neighbours' segments crosses the boundary (the Shortley-Weller fractions).
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .exceptions import DomainError, ResolutionError

EXTERIOR, INTERIOR, NEAR_BOUNDARY = 0, 1, 2
# axis directions: +x, -x, +y, -y
DIRECTIONS = np.array([[1, 0], [-1, 0], [0, 1], [0, -1]])
# nodes within SNAP * h of the boundary are treated as boundary points
SNAP = 1e-3
SNAP_REACH = 1.5


class Domain:
    """Base class; subclasses provide an exact signed distance (negative inside)."""

    ball_radius = None

    def signed_distance(self, x):
        raise NotImplementedError

    def outward_normal(self, x):
        raise NotImplementedError

    def bounding_box(self):
        raise NotImplementedError

    @property
    def width(self):
        """Thinnest dimension, used for the resolution check."""
        raise NotImplementedError

    def boundary_samples(self, m=4096):
        raise NotImplementedError

    def project(self, x):
        """Closest boundary point of ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return x - self.signed_distance(x)[:, None] * self.outward_normal(x)

    def to_dict(self):
        raise NotImplementedError


def _pts(x):
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise DomainError("points must be finite")
    return np.atleast_2d(x)


def _unit(v):
    n = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.where(n > 0, n, 1.0)


def _scalar_out(x, val):
    return val if np.ndim(x) > 1 else val[0]


@dataclass(frozen=True)
class Ball(Domain):
    center: tuple
    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def ball_radius(self):
        return self.R

    @property
    def width(self):
        return 2 * self.R

    def signed_distance(self, x):
        p = _pts(x)
        return _scalar_out(x, np.linalg.norm(p - self.center, axis=1) - self.R)

    def outward_normal(self, x):
        return _unit(_pts(x) - self.center)

    def bounding_box(self):
        c = np.array(self.center)
        return c - self.R, c + self.R

    def boundary_samples(self, m=4096):
        t = 2 * np.pi * np.arange(m) / m
        return np.array(self.center) + self.R * np.column_stack([np.cos(t), np.sin(t)])

    def to_dict(self):
        return {"shape": "Ball", "center": list(self.center), "R": self.R}


@dataclass(frozen=True)
class Annulus(Domain):
    center: tuple
    r_in: float
    r_out: float

    def __post_init__(self):
        if not 0 < self.r_in < self.r_out:
            raise ValueError("need 0 < r_in < r_out")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))

    @property
    def ball_radius(self):
        return min(0.5 * (self.r_out - self.r_in), self.r_in)

    @property
    def width(self):
        return self.r_out - self.r_in

    def signed_distance(self, x):
        rho = np.linalg.norm(_pts(x) - self.center, axis=1)
        return _scalar_out(x, np.maximum(self.r_in - rho, rho - self.r_out))

    def outward_normal(self, x):
        z = _pts(x) - self.center
        rho = np.linalg.norm(z, axis=1)
        inner = rho < 0.5 * (self.r_in + self.r_out)
        return np.where(inner[:, None], -1.0, 1.0) * _unit(z)

    def bounding_box(self):
        c = np.array(self.center)
        return c - self.r_out, c + self.r_out

    def boundary_samples(self, m=4096):
        t = 2 * np.pi * np.arange(m) / m
        ring = np.column_stack([np.cos(t), np.sin(t)])
        c = np.array(self.center)
        return np.vstack([c + self.r_in * ring, c + self.r_out * ring])

    def to_dict(self):
        return {"shape": "Annulus", "center": list(self.center), "r_in": self.r_in,
                "r_out": self.r_out}


@dataclass(frozen=True)
class Stadium(Domain):
    """Points within ``R`` of the segment ``a``-``b``."""

    a: tuple
    b: tuple
    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise ValueError("radius must be positive")
        object.__setattr__(self, "a", tuple(float(c) for c in self.a))
        object.__setattr__(self, "b", tuple(float(c) for c in self.b))

    @property
    def ball_radius(self):
        return self.R

    @property
    def width(self):
        return 2 * self.R

    def _closest(self, p):
        a, b = np.array(self.a), np.array(self.b)
        ab = b - a
        L2 = float(ab @ ab)
        t = np.zeros(len(p)) if L2 == 0 else np.clip((p - a) @ ab / L2, 0.0, 1.0)
        return a + t[:, None] * ab

    def signed_distance(self, x):
        p = _pts(x)
        return _scalar_out(x, np.linalg.norm(p - self._closest(p), axis=1) - self.R)

    def outward_normal(self, x):
        p = _pts(x)
        return _unit(p - self._closest(p))

    def bounding_box(self):
        a, b = np.array(self.a), np.array(self.b)
        return np.minimum(a, b) - self.R, np.maximum(a, b) + self.R

    def boundary_samples(self, m=4096):
        a, b = np.array(self.a), np.array(self.b)
        L = float(np.linalg.norm(b - a))
        per = 2 * L + 2 * np.pi * self.R
        s = per * np.arange(m) / m
        u = (b - a) / L if L > 0 else np.array([1.0, 0.0])
        nrm = np.array([-u[1], u[0]])
        out = np.empty((m, 2))
        for i, si in enumerate(s):
            if si < L:
                out[i] = a + si * u + self.R * nrm
            elif si < L + np.pi * self.R:
                th = (si - L) / self.R
                out[i] = b + self.R * (np.cos(th) * nrm + np.sin(th) * u)
            elif si < 2 * L + np.pi * self.R:
                out[i] = b - (si - L - np.pi * self.R) * u - self.R * nrm
            else:
                th = (si - 2 * L - np.pi * self.R) / self.R
                out[i] = a + self.R * (-np.cos(th) * nrm - np.sin(th) * u)
        return out

    def to_dict(self):
        return {"shape": "Stadium", "a": list(self.a), "b": list(self.b), "R": self.R}


def domain_from_dict(d):
    shape = d["shape"]
    if shape == "Ball":
        return Ball(tuple(d["center"]), d["R"])
    if shape == "Annulus":
        return Annulus(tuple(d["center"]), d["r_in"], d["r_out"])
    if shape == "Stadium":
        return Stadium(tuple(d["a"]), tuple(d["b"]), d["R"])
    raise DomainError(f"unknown shape {shape!r}")


def lipschitz_ratio(domain, n_pairs=10_000, rng=None):
    """Largest ``|sd(x) - sd(y)| / |x - y|`` over random pairs in an enlarged box."""
    rng = np.random.default_rng(rng)
    lo, hi = domain.bounding_box()
    span = hi - lo
    x = rng.uniform(lo - 0.25 * span, hi + 0.25 * span, size=(n_pairs, 2))
    y = rng.uniform(lo - 0.25 * span, hi + 0.25 * span, size=(n_pairs, 2))
    num = np.abs(domain.signed_distance(x) - domain.signed_distance(y))
    return float(np.max(num / np.linalg.norm(x - y, axis=1)))


@dataclass(frozen=True)
class Contact:
    eta: np.ndarray
    interior_center: np.ndarray
    exterior_center: np.ndarray
    radius: float


def contact_points(domain, eta, radius=None, tol=1e-8):
    """Centers of the interior and exterior tangent balls at boundary point ``eta``."""
    eta = np.asarray(eta, dtype=float)
    if abs(float(domain.signed_distance(eta))) > tol:
        raise DomainError("eta is not on the boundary")
    r = domain.ball_radius if radius is None else float(radius)
    if r > domain.ball_radius * (1 + 1e-12):
        raise DomainError(f"radius {r:g} exceeds the ball-condition radius {domain.ball_radius:g}")
    n = domain.outward_normal(eta)[0]
    return Contact(eta, eta - r * n, eta + r * n, r)


def tangency_gap(domain, contact, m=4096):
    """``min |eta' - center| - r`` over sampled boundary points, for both centers."""
    pts = domain.boundary_samples(m)
    return tuple(float(np.min(np.linalg.norm(pts - c, axis=1)) - contact.radius)
                 for c in (contact.interior_center, contact.exterior_center))


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform planar grid over a domain with node classes and boundary crossings.

    ``theta[k, d]`` is the fraction of ``h`` from interior node ``k`` to the
    next node or boundary crossing in direction ``d``; ``crossing[k, d]`` is
    that boundary point (NaN where the neighbour is interior).
    """

    domain: Domain
    h: float
    origin: np.ndarray
    shape: tuple
    sd: np.ndarray
    node_class: np.ndarray
    index: np.ndarray
    ij: np.ndarray
    theta: np.ndarray
    crossing: np.ndarray
    neighbor: np.ndarray
    projection: dict = field(repr=False)

    @property
    def n_unknowns(self):
        return len(self.ij)

    def coords(self, ij=None):
        ij = self.ij if ij is None else np.asarray(ij)
        return self.origin + self.h * ij

    @property
    def points(self):
        return self.coords()

    @property
    def near_boundary(self):
        return self.node_class[self.ij[:, 0], self.ij[:, 1]] == NEAR_BOUNDARY

    def distance(self):
        """Exact distance to the boundary at the unknowns."""
        return -self.sd[self.ij[:, 0], self.ij[:, 1]]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "x", "y", "class", "distance"])
        nx, ny = self.shape
        for i in range(nx):
            for j in range(ny):
                x, y = self.origin + self.h * np.array([i, j])
                w.writerow([i * ny + j, "%.17g" % x, "%.17g" % y, int(self.node_class[i, j]),
                            "%.17g" % -self.sd[i, j]])
        return buf.getvalue()


def _root(domain, p, d, h, lo, hi):
    def f(t):
        return float(domain.signed_distance(p + t * h * d))
    return brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)


def _crossing(domain, p, d, h):
    """Fraction ``theta`` of ``h`` to the boundary along ``d`` and the boundary point used."""
    nb_sd = float(domain.signed_distance(p + h * d))
    if nb_sd == 0:
        return 1.0, p + h * d
    if nb_sd > 0:
        t = _root(domain, p, d, h, 0.0, 1.0)
        return t, p + t * h * d
    # the neighbour was snapped to the boundary: look just beyond it
    if domain.signed_distance(p + SNAP_REACH * h * d) > 0:
        t = _root(domain, p, d, h, 1.0, SNAP_REACH)
        return t, p + t * h * d
    return 1.0, domain.project(p + h * d)[0]


def make_grid(domain, h, min_nodes=10, snap=SNAP):
    """Classify the nodes of a spacing-``h`` grid and locate boundary crossings.

    Nodes closer than ``snap * h`` to the boundary are not unknowns (they are
    classed exterior); this keeps the shortened stencils away from ``theta -> 0``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    if domain.width / h < min_nodes:
        raise ResolutionError(f"only {domain.width / h:.1f} nodes across the thinnest "
                              f"dimension; need {min_nodes}")
    lo, hi = domain.bounding_box()
    center = 0.5 * (lo + hi)
    k_lo = np.floor((lo - center) / h).astype(int) - 1
    k_hi = np.ceil((hi - center) / h).astype(int) + 1
    origin = center + h * k_lo
    nx, ny = (k_hi - k_lo + 1)
    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    pts = origin + h * np.column_stack([I.ravel(), J.ravel()])
    sd = domain.signed_distance(pts).reshape(nx, ny)
    inside = sd < -snap * h
    cls = np.where(inside, INTERIOR, EXTERIOR)
    index = -np.ones((nx, ny), dtype=int)
    ij = np.argwhere(inside)
    index[ij[:, 0], ij[:, 1]] = np.arange(len(ij))
    theta = np.ones((len(ij), 4))
    crossing = np.full((len(ij), 4, 2), np.nan)
    neighbor = -np.ones((len(ij), 4), dtype=int)
    projection = {}
    for d, step in enumerate(DIRECTIONS):
        nb = ij + step
        ok = inside[nb[:, 0], nb[:, 1]]
        neighbor[ok, d] = index[nb[ok, 0], nb[ok, 1]]
        for k in np.flatnonzero(~ok):
            p = origin + h * ij[k]
            theta[k, d], crossing[k, d] = _crossing(domain, p, step.astype(float), h)
    near = np.any(neighbor < 0, axis=1)
    cls[ij[near, 0], ij[near, 1]] = NEAR_BOUNDARY
    for k in np.flatnonzero(near):
        projection[int(k)] = domain.project(origin + h * ij[k])[0]
    return Grid(domain, float(h), origin, (int(nx), int(ny)), sd, cls, index, ij, theta,
                crossing, neighbor, projection)


@dataclass(frozen=True)
class BoundaryBand:
    """Nodes ``x`` with ``lo r < d(x) < hi r`` and ``|x - w| < reach r``."""

    anchor: np.ndarray
    r: float
    lo: float
    hi: float
    reach: float
    nodes: np.ndarray

    def predicate(self, x, d):
        x = np.atleast_2d(x)
        return ((self.lo * self.r < d) & (d < self.hi * self.r)
                & (np.linalg.norm(x - self.anchor, axis=1) < self.reach * self.r))


def boundary_band(domain, grid, w, r, lo=1.0, hi=3.0, reach=6.0):
    """Band of unknowns near the boundary point ``w`` (default: ``r < d < 3r`` within ``6r``)."""
    w = np.asarray(w, dtype=float)
    if not r > 0:
        raise ValueError("band radius must be positive")
    band = BoundaryBand(w, float(r), lo, hi, reach, np.array([], dtype=int))
    mask = band.predicate(grid.points, grid.distance())
    nodes = np.flatnonzero(mask)
    if nodes.size == 0:
        raise ResolutionError(f"empty band for r = {r:g}")
    return BoundaryBand(w, float(r), lo, hi, reach, nodes)
