"""Radial strict sub- and supersolution barriers on annuli.

Every barrier is a function of ``rho = |x - y|`` built from a profile
solving ``g' = C phi(g)`` (increasing) or ``f' = -C phi(f)`` (decreasing).
Its Hessian has the radial eigenvalue ``v''(rho)`` and ``n - 1`` copies of
``v'(rho) / rho``, so the Pucci bounds reduce to one-dimensional sampling.
"""

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import _ode
from .exceptions import (AnnulusTooThin, ConstructionFailed, InvalidNonlinearity,
                         OutOfDomain, PhiBViolated, ProfileBlowup, RadiusTooLarge,
                         StrictnessViolation)
from .nonlinearity import (OSGOOD, GrowthFunction, check_integral_condition, check_phi_B,
                           dominates_identity)
from .spectral import MINUS, PLUS, EllipticityPair, SymmetricMatrix, pucci_from_eigenvalues

SUB_ANNULUS = "SubAnnulus"
POSITIVE_SUB_ANNULUS = "PositiveSubAnnulus"
GROWING_SUPER = "GrowingSuper"
NEGATED_SUB = "NegatedSub"
EXP_SUPER = "ExpSuper"

SUB_KINDS = (SUB_ANNULUS, POSITIVE_SUB_ANNULUS)
SUPER_KINDS = (GROWING_SUPER, NEGATED_SUB, EXP_SUPER)

# the halving schedule may go far below the double range: VarExpLog needs log mu ~ -e^C
LOG_MU_FLOOR = -1e200
SNAP_REL = 1e-6
# decaying profiles shrink by many orders in log f; a tighter tolerance keeps the
# dense-output residual well inside 1e-8
DECAY_RTOL = 1e-11
SEARCH_RTOL = 1e-6
NU_CAP = 1e12
PROFILE_SAMPLES = 1001

_verdict_cache = {}
_profile_cache = {}


def _cached_verdict(phi, which):
    key = (phi.kind, repr(sorted(phi.params.items())), which)
    if key not in _verdict_cache:
        if which == "PhiB":
            _verdict_cache[key] = check_phi_B(phi)
        else:
            _verdict_cache[key] = check_integral_condition(phi, which)
    return _verdict_cache[key]


@dataclass(frozen=True, eq=False)
class StructureBounds:
    """Ellipticity constants, dimension and growth functions of the structure conditions."""

    ell: EllipticityPair
    n: int
    phi: GrowthFunction
    gamma: GrowthFunction = None
    Cstar: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("dimension must be positive")
        if not dominates_identity(self.phi):
            raise InvalidNonlinearity("structure bound needs phi(t) >= t on [0, 1]")
        if self.gamma is not None:
            t = np.linspace(0.0, 1.0, 2001)
            if not self.Cstar >= 0 or np.any(self.gamma(t) > self.Cstar * self.phi(t) * (1 + 1e-12)):
                raise InvalidNonlinearity("need gamma(r) <= C* phi(r) for r <= 1")

    @classmethod
    def variable_exponent(cls, p_minus, p_plus, n=2, C=1.0):
        """Constants for the p(x)-Laplacian: lam = min(1, p- - 1), Lam = max(1, p+ - 1)."""
        ell = EllipticityPair(min(1.0, p_minus - 1.0), max(1.0, p_plus - 1.0))
        return cls(ell, n, GrowthFunction.var_exp_log(C), GrowthFunction.power_law(1.0), 1.0 / C)


def choose_C(bounds, r_star, with_gamma=None):
    """Profile constant making the proofs' sufficient inequality strict on ``(0, r_star]``.

    ``with_gamma`` selects the zeroth-order rule; by default it is used
    whenever ``bounds`` carries a gamma.
    """
    if not r_star > 0:
        raise ValueError("r_star must be positive")
    lam, Lam, n = bounds.ell.lam, bounds.ell.Lam, bounds.n
    base = (r_star + Lam * (n - 1)) / lam
    if with_gamma is None:
        with_gamma = bounds.gamma is not None
    if with_gamma:
        if bounds.gamma is None:
            raise ValueError("zeroth-order rule needs gamma and C*")
        return max(4.0 * base, 2.0 * r_star * bounds.Cstar / lam)
    return 2.0 * base


@dataclass(frozen=True, eq=False)
class BarrierProfile:
    """Solution of ``g' = C phi(g)`` (kind "G") or ``f' = -C phi(f)`` (kind "F").

    The initial value is kept as its logarithm: increasing profiles for
    fast-growing phi start far below the smallest double.
    """

    kind: str
    C: float
    log_initial: float
    t_max: float
    m: float
    phi: GrowthFunction
    _sol: object = field(repr=False)

    @property
    def initial(self):
        return math.exp(self.log_initial) if self.log_initial > -745 else 0.0

    def value(self, t):
        return self._sol.value(t)

    def log_value(self, t):
        return self._sol.log_value(t)

    def integral(self, t):
        return self._sol.integral(t)

    def integral_ratio(self, t):
        """``G(t) / g(t)`` for kind G, ``F(t) / f(0)`` for kind F."""
        return self._sol.aux(t)

    def slope(self, t):
        """Right-hand side of the profile ODE, ``+-C phi(value)``."""
        s = self.C * self.phi(self.value(t))
        return s if self.kind == "G" else -s

    def value_over_phi(self, t):
        """``profile / phi(profile)``, finite even where the profile underflows."""
        return 1.0 / self.phi.log_ratio(self.log_value(t))

    @property
    def samples(self):
        t = np.linspace(0.0, self.t_max, PROFILE_SAMPLES)
        return t, self.value(t)

    def residual(self):
        """Max relative ODE residual of the dense interpolant at sample midpoints."""
        t, _ = self.samples
        return max(self._sol.raw_residual(tm) for tm in 0.5 * (t[1:] + t[:-1]))

    def to_dict(self):
        t, v = self.samples
        return {"kind": self.kind, "C": self.C, "log_initial": self.log_initial,
                "t_max": self.t_max, "m": self.m, "t": t.tolist(), "value": v.tolist()}


def solve_profile(bounds, C, initial=None, kind="G", t_max_request=1.0, log_initial=None):
    """Dense barrier profile; ``m`` is ``int_0^1 g`` (G) or ``int_0^{t_max} f`` (F)."""
    phi = bounds.phi if isinstance(bounds, StructureBounds) else bounds
    if log_initial is None:
        if initial is None or not initial > 0:
            raise ValueError("initial value must be positive")
        log_initial = math.log(initial)
    if kind == "G":
        if not _cached_verdict(phi, OSGOOD).holds:
            raise InvalidNonlinearity("increasing profile needs a divergent Osgood integral")
        t_max = float(t_max_request)
        sol = _ode.integrate_growth(phi, C, t_end=max(t_max, 1.0), log_mu=log_initial)
        m = float(sol.integral(1.0))
    elif kind == "F":
        floor = not _cached_verdict(phi, OSGOOD).holds
        sol = _ode.integrate_decay(phi, C, math.exp(log_initial), t_max_request, floor=floor,
                                   rtol=DECAY_RTOL)
        t_max = float(t_max_request)
        if sol.t_end < t_max_request:
            t_max = 0.9 * sol.t_end
        m = float(sol.integral(t_max))
    else:
        raise ValueError("kind must be 'G' or 'F'")
    return BarrierProfile(kind, float(C), float(log_initial), t_max, m, phi, sol)


@dataclass(frozen=True, eq=False)
class RadialBarrier:
    kind: str
    center: np.ndarray
    r: float
    r_star: float
    C: float
    m: float
    k: float = 2.0
    offset: float = 0.0
    M: float = None
    profile: BarrierProfile = None
    mu_exp: float = None
    log_grad_bounds: tuple = (None, None)

    @property
    def grad_bounds(self):
        """Lower and upper bound of ``|Dv|`` (the lower one may underflow to 0)."""
        with np.errstate(under="ignore", over="ignore"):
            return tuple(float(np.exp(v)) for v in self.log_grad_bounds)

    @property
    def n(self):
        return len(self.center)

    @property
    def radii(self):
        return self.r, self.k * self.r

    @property
    def is_sub(self):
        return self.kind in SUB_KINDS

    def radial(self, rho):
        """Value, first and second radial derivatives at distances ``rho``."""
        rho = np.asarray(rho, dtype=float)
        r, kind = self.r, self.kind
        s = rho / r
        if kind == EXP_SUPER:
            mu = self.mu_exp
            amp = self.M / (math.exp(-mu) - math.exp(-4 * mu))
            e = np.exp(-mu * s * s)
            val = amp * (math.exp(-mu) - e)
            d1 = amp * 2 * mu * rho / r ** 2 * e
            d2 = amp * e * (2 * mu / r ** 2 - 4 * mu ** 2 * rho ** 2 / r ** 4)
            return val + self.offset, d1, d2
        prof = self.profile
        if kind == GROWING_SUPER:
            t = s - 1.0
            return r * prof.integral(t) + self.offset, prof.value(t), prof.slope(t) / r
        t = 2.0 - s
        G, g, dg = prof.integral(t), prof.value(t), prof.slope(t)
        if kind == SUB_ANNULUS:
            return r * (G - self.m) + self.offset, -g, dg / r
        if kind == POSITIVE_SUB_ANNULUS:
            return r * G + self.offset, -g, dg / r
        if kind == NEGATED_SUB:
            return -r * (G - self.m) + self.offset, g, -dg / r
        raise ValueError(kind)

    def normalized(self, rho):
        """Hessian eigenvalues divided by ``phi(|Dv|)``: radial and tangential.

        Computed from ``log`` of the profile, so they stay finite where the
        gradient itself under- or overflows.
        """
        rho = np.asarray(rho, dtype=float)
        prof, r = self.profile, self.r
        if self.kind == GROWING_SUPER:
            q = prof.value_over_phi(rho / r - 1.0)
            return -self.C / r * np.ones_like(rho), q / rho
        q = prof.value_over_phi(2.0 - rho / r)
        if self.kind == NEGATED_SUB:
            return -self.C / r * np.ones_like(rho), q / rho
        return self.C / r * np.ones_like(rho), -q / rho

    def value(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        rho = np.linalg.norm(x - self.center, axis=1)
        return self.radial(rho)[0]

    def base_value(self, rho):
        return self.radial(rho)[0] - self.offset

    def to_dict(self):
        return {"kind": self.kind, "center": list(map(float, self.center)), "r": self.r,
                "r_star": self.r_star, "C": self.C, "m": self.m, "k": self.k,
                "offset": self.offset, "M": self.M, "mu_exp": self.mu_exp,
                "log_grad_bounds": list(self.log_grad_bounds),
                "profile": None if self.profile is None else self.profile.to_dict()}


def eval_barrier(b, x):
    """Analytic value, gradient and Hessian of a barrier at ``x`` in its open annulus."""
    x = np.asarray(x, dtype=float)
    z = x - b.center
    rho = float(np.linalg.norm(z))
    inner, outer = b.radii
    if not inner < rho < outer:
        raise OutOfDomain(f"|x - y| = {rho:.6g} is outside ({inner:.6g}, {outer:.6g})")
    val, d1, d2 = (float(v) for v in b.radial(rho))
    e = z / rho
    grad = d1 * e
    hess = d2 * np.outer(e, e) + (d1 / rho) * (np.eye(len(x)) - np.outer(e, e))
    return val, grad, SymmetricMatrix.from_array(hess, check=False)


def _mu_excess(bounds, C, M, r, positive, log_mu, rtol=_ode.RTOL):
    """Largest violation among the size conditions; nonpositive means ``mu`` passes.

    Continuous and increasing in ``log mu``; a blow-up counts as ``+1``.
    """
    try:
        sol = _ode.integrate_growth(bounds.phi, C, t_end=1.0, log_mu=log_mu,
                                    log_cap=-log_mu + 1.0, rtol=rtol)
    except ProfileBlowup:
        return 1.0
    m = float(sol.integral(1.0))
    with np.errstate(divide="ignore"):
        ex = [float(sol.log_value(1.0)) + log_mu, math.log(m / M) if m > 0 else -math.inf]
        if positive:
            ex.append(math.log(m * r) if m > 0 else -math.inf)
    return max(ex)


def _select_mu(bounds, C, M, r, positive):
    """A ``mu`` on the halving schedule ``mu0 2^-j`` meeting the size conditions.

    The conditions are monotone in ``mu``.  The threshold is located by a
    root search in ``x = log(1 - log mu)`` and then snapped to the schedule,
    so the returned ``j`` is the first admissible count up to a relative
    ``SNAP_REL``: for very fast phi ``j`` is beyond what a double resolves in
    ``log mu``.
    """
    if not _cached_verdict(bounds.phi, OSGOOD).holds:
        raise InvalidNonlinearity("increasing profile needs a divergent Osgood integral")
    key = (bounds.phi.kind, repr(sorted(bounds.phi.params.items())), C, M, r if positive else None)
    if key in _profile_cache:
        return _profile_cache[key]
    log_mu0 = math.log(min(1.0, M))
    ln2 = math.log(2.0)

    def excess(j):
        return _mu_excess(bounds, C, M, r, positive, log_mu0 - j * ln2)

    if excess(0) <= 0:
        j = 0
    else:
        x_max = math.log(1.0 - LOG_MU_FLOOR)
        x_lo = math.log(1.0 - log_mu0)

        def fx(x):
            return _mu_excess(bounds, C, M, r, positive, 1.0 - math.exp(x), rtol=SEARCH_RTOL)

        x_hi = x_lo + 1.0
        while fx(x_hi) > 0:
            x_lo, x_hi = x_hi, x_hi + (x_hi - x_lo) * 2.0
            if x_hi > x_max:
                raise ConstructionFailed(f"no log mu >= {LOG_MU_FLOOR:g} gives m <= M = {M:g}")
        x = brentq(fx, x_lo, x_hi, xtol=1e-7, rtol=1e-10)
        j = max(0, math.ceil((log_mu0 - (1.0 - math.exp(x))) / ln2))
        # bracket the estimate at full accuracy, then bisect
        step = max(1, math.ceil(SNAP_REL * j))
        if excess(j) <= 0:
            hi, lo = j, j - step
            while lo >= 0 and excess(lo) <= 0:
                hi, lo, step = lo, lo - 2 * step, 2 * step
            lo = max(lo, -1)
        else:
            lo, hi = j, j + step
            while excess(hi) > 0:
                lo, hi, step = hi, hi + 2 * step, 2 * step
        while hi - lo > max(1, SNAP_REL * hi):
            mid = (lo + hi) // 2
            if excess(mid) <= 0:
                hi = mid
            else:
                lo = mid
        j = hi
    prof = solve_profile(bounds, C, kind="G", t_max_request=1.0, log_initial=log_mu0 - j * ln2)
    if not (prof.m <= M and prof.log_value(1.0) <= -prof.log_initial):
        raise ConstructionFailed("selected mu fails the size conditions at full accuracy")
    if len(_profile_cache) > 256:
        _profile_cache.clear()
    _profile_cache[key] = prof
    return prof


def blow_down_time(phi, C, nu):
    """Time for ``f' = -C phi(f)`` to reach 0 from ``nu`` (infinite under Osgood)."""
    if _cached_verdict(phi, OSGOOD).holds:
        return math.inf
    val, _ = quad(lambda s: 1.0 / float(phi(s)), 0.0, nu, limit=200)
    return val / C


def build_barrier(bounds, y, r, r_star, kind, M, offset=0.0, C=None):
    """Construct one of the four profile barriers on the annulus around ``y``."""
    y = np.asarray(y, dtype=float)
    if len(y) != bounds.n:
        raise ValueError("center dimension does not match bounds.n")
    if not 0 < r <= r_star:
        raise ValueError("need 0 < r <= r_star")
    if not M > 0:
        raise ValueError("M must be positive")
    if offset < 0:
        raise ValueError("offset must be nonnegative")
    if C is None:
        C = choose_C(bounds, r_star, with_gamma=kind == POSITIVE_SUB_ANNULUS)
    if kind in (SUB_ANNULUS, NEGATED_SUB, POSITIVE_SUB_ANNULUS):
        positive = kind == POSITIVE_SUB_ANNULUS
        if positive and (bounds.gamma is None or r > 1):
            raise ValueError("positive subsolution needs gamma, C* and r <= 1")
        prof = _select_mu(bounds, C, M, r, positive)
        gb = (prof.log_initial, float(prof.log_value(1.0)))
        return RadialBarrier(kind, y, float(r), float(r_star), float(C), prof.m, 2.0,
                             float(offset), float(M), prof, None, gb)
    if kind == GROWING_SUPER:
        if not _cached_verdict(bounds.phi, "PhiB").holds:
            raise PhiBViolated("growth function fails the large-gradient integral condition")
        nu = max(1.0, M)
        k = min(2.0, 0.9 * blow_down_time(bounds.phi, C, nu))
        if not k > 1:
            raise AnnulusTooThin(f"blow-down time forces k = {k:.4g} <= 1")
        while nu <= NU_CAP:
            prof = solve_profile(bounds, C, nu, "F", k - 1.0)
            if prof.t_max >= k - 1.0 and prof.m >= M:
                gb = (float(prof.log_value(k - 1.0)), math.log(nu))
                return RadialBarrier(kind, y, float(r), float(r_star), float(C), prof.m, k,
                                     float(offset), float(M), prof, None, gb)
            nu *= 2.0
        raise PhiBViolated(f"nu passed {NU_CAP:g} before m >= M = {M:g}")
    raise ValueError(f"unknown barrier kind {kind!r}")


def crux_value(mu, p_minus, p_plus, q_minus, q_plus, grad_p_norm, n, M, r, a=0.0):
    """Left-hand side of the exponential-barrier inequality (must be <= 0)."""
    L = grad_p_norm
    val = (mu * (8 * r * L - 2 * (p_minus - 1))
           + 2 * r * L * (math.log(4.0 / (1.0 - math.exp(-3 * mu))) + abs(math.log(M)) + abs(math.log(r)))
           + n + p_plus - 2)
    if a < 0:
        val += -a * max(M ** (q_plus - 1), M ** (q_minus - 1))
    return val


def build_exp_barrier(p_minus, p_plus, q_minus, q_plus, grad_p_norm, n, M, r, a=0.0,
                      center=None, mu_max=1e6):
    """Exponential supersolution ``0`` on ``|x-y| = r`` and ``M`` on ``|x-y| = 2r``.

    Returns the barrier and the smallest ``mu`` on the doubling schedule
    ``1, 2, 4, ...`` for which :func:`crux_value` is nonpositive.
    """
    if not (1 < p_minus <= p_plus and M > 0 and r > 0):
        raise ValueError("need 1 < p- <= p+, M > 0, r > 0")
    if grad_p_norm > 0 and r > (p_minus - 1) / (4 * grad_p_norm):
        raise RadiusTooLarge(f"r = {r:g} exceeds (p- - 1)/(4 |grad p|) = "
                             f"{(p_minus - 1) / (4 * grad_p_norm):g}")
    args = (p_minus, p_plus, q_minus, q_plus, grad_p_norm, n, M, r, a)
    mu = 1.0
    while crux_value(mu, *args) > 0:
        mu *= 2.0
        if mu > mu_max:
            raise ConstructionFailed(f"no mu <= {mu_max:g} satisfies the exponential-barrier inequality")
    y = np.zeros(n) if center is None else np.asarray(center, dtype=float)
    amp = M / (math.exp(-mu) - math.exp(-4 * mu))
    # |Du| = amp (2 mu rho / r^2) e^{-mu rho^2/r^2} on [r, 2r]; unimodal in rho
    rho = np.linspace(r, 2 * r, 2001)
    dn = amp * 2 * mu * rho / r ** 2 * np.exp(-mu * rho ** 2 / r ** 2)
    gb = (math.log(dn.min()), math.log(dn.max()))
    b = RadialBarrier(EXP_SUPER, y, float(r), float(r), None, None, 2.0, 0.0, float(M),
                      None, float(mu), gb)
    return b, mu


@dataclass(frozen=True)
class MarginReport:
    kind: str
    radii: np.ndarray
    margins: np.ndarray
    required_sign: int
    worst: float
    worst_radius: float

    @property
    def passed(self):
        return bool(self.required_sign * self.worst > 0)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["radius", "margin"])
        for a, b in zip(self.radii, self.margins):
            w.writerow([repr(float(a)), repr(float(b))])
        return buf.getvalue()


def verify_strictness(b, bounds, grid_density=10_000, raise_on_violation=True):
    """Sample the structure-condition bound on ``grid_density`` radial stations.

    Sub kinds need ``phi(|Dv|) + P+(D2v) (+ gamma(v))`` < 0, super kinds need
    ``-phi(|Dv|) + P-(D2v)`` > 0.  Margins are in units of ``phi(|Dv|)``.
    """
    if b.kind == EXP_SUPER:
        raise ValueError("exponential barriers are certified by crux_value, not the Pucci bounds")
    inner, outer = b.radii
    rho = inner + (np.arange(grid_density) + 0.5) * (outer - inner) / grid_density
    e_rad, e_tan = b.normalized(rho)
    eigs = np.column_stack([e_rad] + [e_tan] * (bounds.n - 1))
    if b.is_sub:
        margins = 1.0 + pucci_from_eigenvalues(eigs, bounds.ell, PLUS)
        if b.kind == POSITIVE_SUB_ANNULUS:
            # gamma(v) / phi(g) with v = r G(#) = r K g and K = G/g
            t = 2.0 - rho / b.r
            prof = b.profile
            K = prof.integral_ratio(t)
            with np.errstate(divide="ignore"):
                log_v = math.log(b.r) + np.log(K) + prof.log_value(t)
            margins = margins + bounds.gamma.log_ratio(log_v) * b.r * K * prof.value_over_phi(t)
        sign = -1
    else:
        margins = -1.0 + pucci_from_eigenvalues(eigs, bounds.ell, MINUS)
        sign = 1
    i = int(np.argmin(sign * margins))
    report = MarginReport(b.kind, rho, margins, sign, float(margins[i]), float(rho[i]))
    if raise_on_violation and not report.passed:
        raise StrictnessViolation(
            f"{b.kind}: margin {margins[i]:.3e} has the wrong sign at radius {rho[i]:.6g}",
            radius=float(rho[i]), margin=float(margins[i]))
    return report


class BarrierEstimator(BaseEstimator):
    """Estimator wrapper: ``fit`` builds and certifies a barrier, ``predict`` evaluates it.

    ``fit`` ignores ``X`` and ``y``.  Fitted attributes: ``barrier_``,
    ``bounds_`` and ``margins_`` (the :class:`MarginReport`).
    """

    def __init__(self, kind=SUB_ANNULUS, lam=1.0, Lam=1.0, n=2, phi=None, gamma=None, Cstar=0.0,
                 center=None, r=0.5, r_star=None, M=1.0, offset=0.0, C=None, stations=10_000):
        self.kind = kind
        self.lam = lam
        self.Lam = Lam
        self.n = n
        self.phi = phi
        self.gamma = gamma
        self.Cstar = Cstar
        self.center = center
        self.r = r
        self.r_star = r_star
        self.M = M
        self.offset = offset
        self.C = C
        self.stations = stations

    def fit(self, X=None, y=None):
        phi = GrowthFunction.power_law(1.0) if self.phi is None else self.phi
        self.bounds_ = StructureBounds(EllipticityPair(self.lam, self.Lam), self.n, phi,
                                       self.gamma, self.Cstar)
        center = np.zeros(self.n) if self.center is None else self.center
        r_star = self.r if self.r_star is None else self.r_star
        self.barrier_ = build_barrier(self.bounds_, center, self.r, r_star, self.kind, self.M,
                                      self.offset, self.C)
        self.margins_ = verify_strictness(self.barrier_, self.bounds_, self.stations)
        return self

    def predict(self, X):
        check_is_fitted(self, "barrier_")
        return self.barrier_.value(X)
