"""Empirical checks of the maximum principle and boundary estimates on grid data.

Each check returns a :class:`VerificationReport` whose ``measured`` dict holds
the quantity the verdict rests on.  Checks take 2-D :class:`GridFunction`
fields; the maximum principle and Hopf checks also accept 1-D samples
(:class:`LineFunction`), which is how the counterexample H is tested.
"""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .exceptions import DomainError, HypothesisError, PositivityError, ResolutionError
from .geometry import boundary_band

SMAP = "smap"
HOPF = "hopf_slope"
DISTANCE = "distance_comparability"
HARNACK = "boundary_harnack"
BARRIER = "barrier_comparison"

STABILITY = 0.2
HOPF_STEPS = (4, 8, 16)


@dataclass(frozen=True)
class VerificationReport:
    check: str
    passed: bool
    measured: dict
    witness: tuple = ()
    params: dict = field(default_factory=dict)
    scatter: tuple = field(default=(), repr=False)

    def to_dict(self):
        return json.loads(json.dumps({"check": self.check, "passed": bool(self.passed),
                                      "measured": self.measured, "witness": list(self.witness),
                                      "params": self.params}, default=_jsonable))

    def scatter_csv(self):
        """``(d, ratio)`` pairs behind distance and quotient checks."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["d", "ratio"])
        for d, q in self.scatter:
            w.writerow(["%.17g" % d, "%.17g" % q])
        return buf.getvalue()


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(type(o).__name__)


@dataclass(frozen=True)
class LineFunction:
    """Samples of a function on an increasing 1-D grid; the endpoints are the boundary."""

    x: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim != 1 or x.size < 5 or np.any(np.diff(x) <= 0):
            raise ValueError("need an increasing grid of at least 5 points")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))

    @classmethod
    def from_function(cls, func, a, b, n):
        x = np.linspace(a, b, n)
        return cls(x, func(x))

    @property
    def h(self):
        return float(np.max(np.diff(self.x)))

    def __call__(self, t):
        return np.interp(t, self.x, self.values)


def check_smap(u, tol_factor=10.0):
    """Maximum over the closure attained only next to the boundary, or ``u`` constant."""
    if isinstance(u, LineFunction):
        vals, h = u.values, u.h
        closure = vals
        inner = np.arange(2, len(vals) - 2)
        where = u.x
    else:
        vals, h = u.values, u.grid.h
        closure = np.concatenate([vals, u.boundary_values])
        inner = np.flatnonzero(~u.grid.near_boundary)
        where = u.points
    M = float(np.max(closure))
    spread = M - float(np.min(closure))
    tol = tol_factor * h ** 2
    if spread <= tol:
        return VerificationReport(SMAP, True, {"max": M, "spread": spread, "constant": True},
                                  params={"h": h, "tol": tol})
    k = inner[np.argmax(vals[inner])]
    interior_max = float(vals[k])
    passed = interior_max < M
    witness = () if passed else tuple(np.atleast_1d(where[k]).tolist())
    plateau = int(np.sum(vals[inner] >= M)) if not passed else 0
    return VerificationReport(SMAP, passed, {"max": M, "interior_max": interior_max,
                                             "gap": M - interior_max, "spread": spread,
                                             "constant": False, "plateau_nodes": plateau},
                              witness, {"h": h, "tol": tol})


def _richardson(q1, q2, q4):
    return (8 * q1 - 6 * q2 + q4) / 3


def check_hopf_slope(u, domain=None, w=None, v=None, steps=HOPF_STEPS, floor_factor=1e-3):
    """Sign of the one-sided difference quotients ``(u(w + s v) - u(w)) / s``.

    Passes when the quotients at ``s = 4h, 8h, 16h`` all exceed the floor
    ``1e-3 max|u| / r`` (minimum at w) or all lie below its negative
    (maximum at w).  ``r`` is the ball radius of the domain (the grid length
    for 1-D samples).
    """
    if isinstance(u, LineFunction):
        w = float(u.x[0] if w is None else w)
        if not (np.isclose(w, u.x[0]) or np.isclose(w, u.x[-1])):
            raise DomainError("w must be an endpoint of the 1-D grid")
        v = (1.0 if np.isclose(w, u.x[0]) else -1.0) if v is None else float(v)
        h, r = u.h, float(u.x[-1] - u.x[0])
        scale = float(np.max(np.abs(u.values)))

        def at(s):
            return float(u(w + s * v))
    else:
        w = np.asarray(w, dtype=float)
        if abs(float(domain.signed_distance(w))) > 1e-8:
            raise DomainError("w is not on the boundary")
        n_out = domain.outward_normal(w)[0]
        v = -n_out if v is None else np.asarray(v, dtype=float) / np.linalg.norm(v)
        if not np.dot(v, n_out) < 0:
            raise DomainError("direction must point into the domain")
        h, r = u.grid.h, domain.ball_radius
        scale = float(np.max(np.abs(np.concatenate([u.values, u.boundary_values]))))

        def at(s):
            return float(u(w + s * v))
    u0 = at(0.0)
    s = np.array(steps, dtype=float) * h
    q = np.array([(at(si) - u0) / si for si in s])
    slope = float(_richardson(*q)) if len(q) == 3 else float(q[0])
    floor = floor_factor * scale / r
    lower = bool(np.all(q > floor))
    upper = bool(np.all(q < -floor))
    form = "minimum" if lower else "maximum" if upper else None
    return VerificationReport(HOPF, lower or upper,
                              {"slope": slope, "quotients": q.tolist(), "floor": floor,
                               "form": form, "u_w": u0},
                              tuple(np.atleast_1d(w).tolist()),
                              {"h": h, "steps": s.tolist(), "direction": np.atleast_1d(v).tolist()})


def _check_vanishing(u, w, radius, name="u"):
    near = np.linalg.norm(u.boundary_points - w, axis=1) < radius
    bv = u.boundary_values[near]
    scale = max(1.0, float(np.max(np.abs(u.values))))
    if bv.size and np.max(np.abs(bv)) > 1e-12 * scale:
        raise HypothesisError(f"{name} does not vanish on the boundary near w")


def _band_ratios(u, domain, w, r, lo, hi, reach):
    band = boundary_band(domain, u.grid, w, r, lo, hi, reach)
    ball = np.linalg.norm(u.points - w, axis=1) < reach * r
    if np.any(u.values[ball] <= 0):
        raise PositivityError("u must be positive near w")
    _check_vanishing(u, w, reach * r)
    d = u.grid.distance()[band.nodes]
    return d, u.values[band.nodes] / d


def _spread(values):
    values = np.asarray(values, dtype=float)
    return float(np.max(values) / np.min(values) - 1.0)


def distance_comparability(u, domain, w, r, lo=1.0, hi=3.0, reach=6.0, refined=None,
                           scales=(1.0, 0.5), stability=STABILITY):
    """Constants with ``d / c_low <= u <= c_high d`` on the band ``lo r < d < hi r`` near ``w``.

    The constants are recomputed on the band at each radius ``r * scale``
    and, if ``refined`` (the same problem at ``h/2``) is given, on that grid;
    the check passes when they are positive, finite and agree within
    ``stability``.
    """
    w = np.asarray(w, dtype=float)
    h = u.grid.h
    d, ratio = _band_ratios(u, domain, w, r, lo, hi, reach)
    if not np.any(d >= 4 * h):
        raise ResolutionError(f"band has no node with d >= 4h = {4 * h:g}")
    c_high, c_low_inv = float(np.max(ratio)), float(np.min(ratio))
    highs, lows = [c_high], [c_low_inv]
    for sc in scales[1:]:
        _, rr = _band_ratios(u, domain, w, r * sc, lo, hi, reach / sc)
        highs.append(float(np.max(rr)))
        lows.append(float(np.min(rr)))
    if refined is not None:
        _, rr = _band_ratios(refined, domain, w, r, lo, hi, reach)
        highs.append(float(np.max(rr)))
        lows.append(float(np.min(rr)))
    ok = bool(np.isfinite(c_high) and c_low_inv > 0)
    stable = _spread(highs) <= stability and _spread(lows) <= stability
    k = int(np.argmax(ratio))
    measured = {"c_high": c_high, "c_low": 1.0 / c_low_inv if c_low_inv > 0 else float("inf"),
                "c_low_inv": c_low_inv, "c_high_all": highs, "c_low_inv_all": lows,
                "band_nodes": int(d.size), "product": c_high / c_low_inv}
    return VerificationReport(DISTANCE, ok and stable, measured, tuple(w.tolist()),
                              {"r": r, "lo": lo, "hi": hi, "reach": reach, "h": h,
                               "scales": list(scales), "refined": refined is not None},
                              tuple(zip(d.tolist(), ratio.tolist())))


def _quotient(u, v, w, r):
    if u.grid is not v.grid and u.values.shape != v.values.shape:
        raise ValueError("u and v must live on the same grid")
    ball = np.linalg.norm(u.points - w, axis=1) < r
    if not np.any(ball):
        raise ResolutionError(f"no nodes within {r:g} of w")
    for name, f in (("u", u), ("v", v)):
        if np.any(f.values[ball] <= 0):
            raise PositivityError(f"{name} must be positive near w")
        _check_vanishing(f, w, 6 * r, name)
    d = u.grid.distance()[ball]
    return d, u.values[ball] / v.values[ball]


def boundary_harnack_quotient(u, v, domain, w, r, cap=10.0, refined=None, stability=STABILITY):
    """Range of ``u / v`` over the nodes of ``B(w, r)``; ``refined`` is a pair at ``h/2``."""
    w = np.asarray(w, dtype=float)
    d, q = _quotient(u, v, w, r)
    qmin, qmax = float(np.min(q)), float(np.max(q))
    within = 1.0 / cap <= qmin and qmax <= cap
    mins, maxs = [qmin], [qmax]
    if refined is not None:
        _, q2 = _quotient(refined[0], refined[1], w, r)
        mins.append(float(np.min(q2)))
        maxs.append(float(np.max(q2)))
    stable = _spread(mins) <= stability and _spread(maxs) <= stability
    return VerificationReport(HARNACK, bool(within and stable),
                              {"min": qmin, "max": qmax, "min_all": mins, "max_all": maxs,
                               "nodes": int(q.size)},
                              tuple(w.tolist()),
                              {"r": r, "cap": cap, "h": u.grid.h, "refined": refined is not None},
                              tuple(zip(d.tolist(), q.tolist())))


def compare_with_barrier(u, b, allowance=None, sphere_samples=720):
    """Order ``u`` against a radial barrier on the barrier's annulus.

    Super barriers must lie above ``u``, sub barriers below.  The ordering
    on the relative boundary (boundary data inside the annulus and the two
    spheres inside the domain) is a hypothesis.  ``allowance`` defaults to
    ``10 h^2`` for solved fields and to 0 for sampled ones, so a field equal
    to the barrier fails.
    """
    if allowance is None:
        allowance = 10 * u.grid.h ** 2 if "iterations" in u.info else 0.0
    sign = -1.0 if b.is_sub else 1.0
    r_in, r_out = b.radii
    c = np.asarray(b.center, dtype=float)
    rho = np.linalg.norm(u.points - c, axis=1)
    region = np.flatnonzero((rho > r_in) & (rho < r_out))
    if region.size == 0:
        raise ResolutionError("no grid nodes inside the barrier annulus")
    # relative boundary: Dirichlet data inside the closed annulus ...
    brho = np.linalg.norm(u.boundary_points - c, axis=1)
    inb = (brho >= r_in) & (brho <= r_out)
    gaps = [sign * (b.value(u.boundary_points[inb]) - u.boundary_values[inb])]
    # ... and the two spheres where they lie inside the domain
    t = 2 * np.pi * np.arange(sphere_samples) / sphere_samples
    ring = np.column_stack([np.cos(t), np.sin(t)])
    domain = u.grid.domain
    for rad in (r_in, r_out):
        pts = c + rad * ring
        pts = pts[domain.signed_distance(pts) < -2 * u.grid.h]
        if len(pts):
            vals = u(pts)
            good = np.isfinite(vals)
            gaps.append(sign * (b.value(pts[good]) - vals[good]))
    gaps = np.concatenate(gaps)
    if gaps.size and np.min(gaps) < -allowance:
        raise HypothesisError(f"ordering fails on the relative boundary (gap {np.min(gaps):.3e})")
    margin = sign * (b.value(u.points[region]) - u.values[region])
    k = int(np.argmin(margin))
    worst = float(margin[k])
    passed = worst > -allowance
    return VerificationReport(BARRIER, bool(passed),
                              {"margin": worst, "boundary_margin": float(np.min(gaps)) if gaps.size else None,
                               "nodes": int(region.size)},
                              tuple(u.points[region[k]].tolist()),
                              {"kind": b.kind, "allowance": allowance, "h": u.grid.h})
