"""Growth functions phi and the integral conditions that classify them.

A :class:`GrowthFunction` is the drift nonlinearity of the structure
conditions.  Three integral tests decide its behaviour:

* Osgood, ``int_0^1 dt / phi(t) = inf`` (needed for the strong maximum principle),
* Keller-Osserman, ``int_1^inf dt / phi(t) = inf``,
* the large-gradient condition: ``int_0^eps f -> inf`` as ``nu -> inf`` where
  ``f' = -phi(f)``, ``f(0) = nu``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import _ode
from .exceptions import DomainError, IntegrationError, InvalidNonlinearity

POWER = "PowerLaw"
VAR_EXP_LOG = "VarExpLog"
TABULATED = "Tabulated"

OSGOOD = "Osgood"
KELLER_OSSERMAN = "KellerOsserman"
PHI_B = "PhiB"

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


@dataclass(frozen=True, eq=False)
class GrowthFunction:
    """Strictly increasing map ``[0, inf) -> [0, inf)``.

    Build instances with :meth:`power_law`, :meth:`var_exp_log` or
    :meth:`tabulated`; calling the instance evaluates phi elementwise.
    """

    kind: str
    params: dict = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        if self.kind == POWER:
            if not (self.params["exponent"] > 0 and self.params.get("scale", 1.0) > 0):
                raise InvalidNonlinearity("power law needs exponent > 0 and scale > 0")
        elif self.kind == VAR_EXP_LOG:
            if not self.params["C"] > 0:
                raise InvalidNonlinearity("VarExpLog needs C > 0")
        elif self.kind == TABULATED:
            t = np.asarray(self.params["t"], dtype=float)
            v = np.asarray(self.params["values"], dtype=float)
            if t.ndim != 1 or t.shape != v.shape or t.size < 2:
                raise InvalidNonlinearity("table needs matching 1-D arrays of length >= 2")
            if t[0] < 0 or np.any(np.diff(t) <= 0) or np.any(np.diff(v) <= 0):
                raise InvalidNonlinearity("table must be strictly increasing in t and value")
            if v[0] < 0:
                raise InvalidNonlinearity("table values must be nonnegative")
            object.__setattr__(self, "_interp", PchipInterpolator(t, v, extrapolate=False))
        else:
            raise InvalidNonlinearity(f"unknown kind {self.kind!r}")

    @classmethod
    def power_law(cls, exponent, scale=1.0):
        return cls(POWER, {"exponent": float(exponent), "scale": float(scale)},
                   f"{scale:g} t^{exponent:g}")

    @classmethod
    def var_exp_log(cls, C=1.0):
        return cls(VAR_EXP_LOG, {"C": float(C)}, f"{C:g} (|log t| + 1) t")

    @classmethod
    def tabulated(cls, t, values):
        return cls(TABULATED, {"t": [float(x) for x in t], "values": [float(x) for x in values]},
                   "monotone cubic table")

    @property
    def t_max(self):
        return self.params["t"][-1] if self.kind == TABULATED else math.inf

    @property
    def t_min(self):
        return self.params["t"][0] if self.kind == TABULATED else 0.0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == POWER:
            k, s = self.params["exponent"], self.params["scale"]
            with np.errstate(over="ignore"):
                return s * np.power(t, k)
        if self.kind == VAR_EXP_LOG:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = self.params["C"] * (np.abs(np.log(t)) + 1.0) * t
            return np.where(t > 0, out, 0.0)
        if np.any((t < self.t_min) | (t > self.t_max)):
            raise DomainError("tabulated growth function evaluated outside its table")
        return self._interp(t)

    def log_ratio(self, log_t):
        """``phi(t) / t`` at ``t = exp(log_t)``, stable for very small or large t."""
        if self.kind == POWER:
            k, s = self.params["exponent"], self.params["scale"]
            with np.errstate(over="ignore"):
                return s * np.exp((k - 1.0) * log_t)
        if self.kind == VAR_EXP_LOG:
            return self.params["C"] * (np.abs(log_t) + 1.0)
        t = np.exp(log_t)
        return self(t) / t

    def to_dict(self):
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, data):
        kind, params = data["kind"], data.get("params", {})
        if kind == POWER:
            return cls.power_law(params["exponent"], params.get("scale", 1.0))
        if kind == VAR_EXP_LOG:
            return cls.var_exp_log(params.get("C", 1.0))
        if kind == TABULATED:
            return cls.tabulated(params["t"], params["values"])
        raise InvalidNonlinearity(f"unknown kind {kind!r}")

    def __repr__(self):
        return f"GrowthFunction({self.kind}, {self.params if self.kind != TABULATED else '...'})"


def eval_phi(phi, t):
    t = float(t)
    if math.isnan(t) or t < 0 or math.isinf(t):
        raise DomainError(f"phi is defined on [0, inf); got {t!r}")
    return float(phi(t))


def dominates_identity(phi, upper=1.0, samples=2001):
    """True if ``phi(t) >= t`` on a sample grid of ``[0, upper]``."""
    t = np.linspace(0.0, min(upper, phi.t_max), samples)
    return bool(np.all(phi(t) >= t * (1 - 1e-14)))


@dataclass(frozen=True)
class ConditionVerdict:
    condition: str
    verdict: str
    limit: float = None
    error: float = None
    diagnostics: tuple = ()

    @property
    def holds(self):
        return self.verdict in ("Divergent", "Holds")

    def to_dict(self):
        return {"condition": self.condition, "verdict": self.verdict,
                "limit": self.limit, "error": self.error,
                "diagnostics": [float(x) for x in self.diagnostics]}


def _band_integrals(phi, lows):
    """``int_a^{2a} dt / phi(t)`` for every band start ``a`` (Gauss-Legendre in log t)."""
    half = 0.5 * math.log(2.0)
    s = half * (_GL_NODES + 1.0)
    log_t = np.log(lows)[:, None] + s[None, :]
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        ratio = phi.log_ratio(log_t)
    if np.any(np.isnan(ratio) | (ratio < 0)):
        raise InvalidNonlinearity("phi must be strictly positive on the open integration range")
    with np.errstate(divide="ignore", over="ignore"):
        # ratio underflows to 0 only where 1/phi is astronomically large
        return half * (_GL_WEIGHTS[None, :] / ratio).sum(axis=1)


def _classify_bands(bands, divergence_cap=1e6):
    """Decide convergence of ``sum(bands)`` and extrapolate the limit.

    Geometric decay (stable ratio below 1) is summed in closed form; slower
    decay ``b_j ~ j^-alpha`` is divergent for ``alpha <= 1``.
    """
    partial = np.cumsum(bands)
    J = len(bands)
    over = np.nonzero(partial > divergence_cap)[0]
    if over.size:
        return "Divergent", None, None, partial[: over[0] + 1]
    tiny = np.nonzero((bands < 1e-17 * partial) & (np.arange(J) >= 40))[0]
    if tiny.size:
        j = tiny[0]
        return "Convergent", float(partial[j]), float(max(bands[j], 1e-16 * partial[j])), partial[: j + 1]
    b = bands
    rho_end = b[-1] / b[-2]
    rho_mid = b[J // 2] / b[J // 2 - 1]
    if not rho_end < 1.0:
        return "Divergent", None, None, partial
    if abs(rho_end - rho_mid) < 1e-6:
        tail = b[-1] * rho_end / (1.0 - rho_end)
        err = abs(tail - b[-2] * (b[-2] / b[-3]) ** 2 / (1.0 - b[-2] / b[-3])) + 1e-15 * partial[-1]
        return "Convergent", float(partial[-1] + tail), float(err), partial
    alpha = math.log(b[J // 2] / b[-1]) / math.log(J / (J // 2))
    if alpha <= 1.05:
        return "Divergent", None, None, partial
    tail = b[-1] * J / (alpha - 1.0)
    return "Convergent", float(partial[-1] + tail), float(abs(tail)), partial


def check_integral_condition(phi, which, tolerance=1e-8, n_bands=1000):
    """Decide the Osgood (near 0) or Keller-Osserman (near infinity) test for ``1/phi``."""
    if which == OSGOOD:
        if phi.t_min > 0:
            raise DomainError("growth function is not defined near 0")
        j = np.arange(n_bands)
        lows = np.ldexp(1.0, -(j + 1))
        if phi.kind == TABULATED:
            lows = lows[lows * 2 <= min(1.0, phi.t_max)]
    elif which == KELLER_OSSERMAN:
        if phi.t_max < math.inf:
            raise DomainError("tabulated growth function cannot be extrapolated to infinity")
        lows = np.ldexp(1.0, np.arange(n_bands))
    else:
        raise ValueError(f"unknown condition {which!r}")
    bands = _band_integrals(phi, lows)
    verdict, limit, err, partial = _classify_bands(bands)
    if verdict == "Convergent":
        err = max(err, tolerance * abs(limit))
    return ConditionVerdict(which, verdict, limit, err, tuple(float(x) for x in partial[:: max(1, len(partial) // 64)]))


def power_law_closed_form(k, eps, nu):
    """``int_0^eps f`` for ``f' = -f^k``, ``f(0) = nu``."""
    if not (k >= 1 and eps > 0 and nu > 0):
        raise DomainError("need k >= 1, eps > 0, nu > 0")
    if k == 1:
        return nu * (1.0 - math.exp(-eps))
    if k == 2:
        return math.log1p(eps * nu)
    return 1.0 / (2 - k) * (nu ** (2 - k) - ((k - 1) * eps + nu ** (1 - k)) ** ((2 - k) / (1 - k)))


def phi_b_integral(phi, eps, nu):
    """``int_0^eps f`` with ``f' = -phi(f)``, ``f(0) = nu``, by adaptive Runge-Kutta."""
    prof = _ode.integrate_decay(phi, 1.0, nu, eps)
    return float(prof.integral(eps))


def default_nu_schedule(cap=1e12):
    n = int(round(math.log10(cap)))
    return [10.0 ** i for i in range(n + 1)]


def check_phi_B(phi, eps=1.0, nu_schedule=None, cap=1e12, threshold=1e3, stall_ratio=0.98):
    """Decide whether ``int_0^eps f`` grows without bound as ``nu`` increases.

    ``Holds`` when the integral passes ``threshold`` or its increments along the
    (geometric) ``nu`` schedule stop decaying; ``Fails`` when the increments
    decay geometrically, with the extrapolated plateau as the limit.
    """
    if not eps > 0:
        raise DomainError("eps must be positive")
    nus = list(default_nu_schedule(cap) if nu_schedule is None else nu_schedule)
    if any(b <= a for a, b in zip(nus, nus[1:])):
        raise ValueError("nu schedule must be strictly increasing")
    nus = [nu for nu in nus if nu <= cap]
    if len(nus) < 6:
        raise ValueError("nu schedule needs at least 6 values below the cap")
    values = []
    for nu in nus:
        try:
            values.append(phi_b_integral(phi, eps, nu))
        except IntegrationError:
            raise
        if values[-1] >= threshold:
            return ConditionVerdict(PHI_B, "Holds", None, None, tuple(values))
    I = np.asarray(values)
    inc = np.diff(I)
    if np.any(inc[-4:] <= 0):
        plateau = float(I[-1])
        return ConditionVerdict(PHI_B, "Fails", plateau, float(abs(inc[-1])), tuple(values))
    ratios = inc[-4:] / inc[-5:-1]
    rho = float(np.exp(np.mean(np.log(ratios))))
    if rho >= stall_ratio:
        return ConditionVerdict(PHI_B, "Holds", None, None, tuple(values))
    tail = inc[-1] * rho / (1.0 - rho)
    return ConditionVerdict(PHI_B, "Fails", float(I[-1] + tail), float(tail), tuple(values))
