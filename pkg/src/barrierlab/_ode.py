"""Adaptive Runge-Kutta integration of the profile ODEs g' = C phi(g) and f' = -C phi(f).

Both equations are integrated in logarithmic variables so that initial values
far outside the double range are handled with the same relative accuracy:

    growth:  l = log g,  l' =  C phi(e^l) / e^l,  K = G / g,  K' = 1 - K l'
    decay:   l = log f,  l' = -C phi(e^l) / e^l,  J = F / f(0), J' = e^(l - l0)

where G and F are the running integrals of g and f.  The K equation relaxes
at rate l', which is huge while g is tiny, so growth from g(0) < e^-40 runs
in two phases: w = log(-l) alone up to l = -40, with K held at its
quasi-steady value 1 / l', then (l, K).  The quasi-steady error in G there
is an absolute constant below e^-40 / l'.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .exceptions import IntegrationError, ProfileBlowup

RK_METHOD = "DOP853"
RTOL = 1e-10
ATOL = 1e-14

_LOG_BLOWUP = 700.0
_LOG_FLOOR = -700.0
_LOG_SWITCH = -40.0
# below this relative size a failed step is read as extinction, not an error
_EXTINCT_REL = -30.0


@dataclass(frozen=True)
class Segment:
    t0: float
    t1: float
    sol: object
    has_aux: bool


@dataclass(frozen=True)
class LogProfile:
    """Dense solution of a profile ODE on ``[0, t_end]``.

    ``aux`` is ``G/g`` for growth and ``F/f(0)`` for decay, where G and F are
    the running integrals.
    """

    segments: tuple
    t_end: float
    log_start: float
    growing: bool
    slope: object = None

    def _eval(self, t):
        """Rows ``log value``, ``integral``, ``aux`` at ``t`` (clipped to the range)."""
        t = np.clip(np.atleast_1d(np.asarray(t, dtype=float)), 0.0, self.t_end)
        out = np.empty((3,) + t.shape)
        with np.errstate(under="ignore", over="ignore"):
            for i, seg in enumerate(self.segments):
                last = i == len(self.segments) - 1
                sel = (t >= seg.t0) & ((t < seg.t1) | last)
                if not np.any(sel):
                    continue
                y = seg.sol(t[sel])
                l = y[0]
                out[0, sel] = l
                if not self.growing:
                    out[1, sel] = y[1] * np.exp(self.log_start)
                    out[2, sel] = y[1]
                elif seg.has_aux:
                    out[1, sel] = y[1] * np.exp(l)
                    out[2, sel] = y[1]
                else:
                    k = 1.0 / np.abs(self.slope(l))
                    out[1, sel] = k * np.exp(l)
                    out[2, sel] = k
        return out

    def _shape(self, t, v):
        return v.reshape(np.shape(t)) if np.ndim(t) else v[0]

    def log_value(self, t):
        return self._shape(t, self._eval(t)[0])

    def aux(self, t):
        return self._shape(t, self._eval(t)[2])

    def value(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(under="ignore"):
            v = np.exp(self.log_value(t))
        if not self.growing:
            v = np.where(t > self.t_end, 0.0, v)
        return v

    def integral(self, t):
        """Running integral of the profile from 0 to ``t``."""
        return self._shape(t, self._eval(t)[1])

    def piece(self, t):
        """Dense-output polynomial piece covering ``t``."""
        for i, seg in enumerate(self.segments):
            if t < seg.t1 or i == len(self.segments) - 1:
                sol = seg.sol
                j = min(max(np.searchsorted(sol.ts, t, side="right") - 1, 0),
                        len(sol.interpolants) - 1)
                return sol.interpolants[j]

    def raw_residual(self, t):
        """Relative mismatch between the interpolant's derivative and the ODE at ``t``.

        Measured in the variable actually integrated (l or log(-l)) on the
        single polynomial piece containing ``t``, with a 5-point stencil that
        is exact on the quartic pieces.
        """
        piece = self.piece(t)
        d = 0.05 * abs(piece.t - piece.t_old)
        if isinstance(piece, _PadPiece):
            raw = piece.raw
            target = piece.raw_slope(raw(t), self.slope)
        else:
            def raw(s):
                return piece(s)[0]
            target = self.slope(raw(t))
        ls = [raw(t + j * d) for j in (-2, -1, 1, 2)]
        dl = (ls[0] - 8 * ls[1] + 8 * ls[2] - ls[3]) / (12 * d)
        return abs(dl / target - 1.0)


def _run(rhs, y0, t0, t_end, events, method, rtol, atol):
    try:
        res = solve_ivp(rhs, (t0, t_end), y0, method=method, rtol=rtol,
                        atol=atol, dense_output=True, events=events)
    except (FloatingPointError, OverflowError) as exc:
        raise IntegrationError(str(exc)) from exc
    return res


def integrate_growth(phi, C, mu=None, t_end=1.0, method=RK_METHOD, rtol=RTOL, atol=ATOL,
                     log_mu=None, log_cap=_LOG_BLOWUP):
    """Integrate g' = C phi(g), g(0) = mu; pass ``log_mu`` for starts below 1e-300.

    Raises :class:`ProfileBlowup` if ``log g`` passes ``log_cap`` before ``t_end``.
    """
    if log_mu is None:
        if not mu > 0:
            raise ValueError("initial value must be positive")
        log_mu = float(np.log(mu))
    l0 = float(log_mu)

    def slope(l):
        return C * phi.log_ratio(l)

    cap = min(log_cap, _LOG_BLOWUP)

    def blow(t, y):
        return y[0] - cap
    blow.terminal = True

    segments, t0, start = [], 0.0, l0
    with np.errstate(over="ignore", under="ignore", divide="ignore", invalid="ignore"):
        if l0 < _LOG_SWITCH:
            # w = log(-l) turns the approach from astronomically small g into a
            # slowly varying problem (linear in t for phi = C (|log t| + 1) t)
            def wrhs(t, y):
                l = -np.exp(y[0])
                return [slope(l) / l]

            def rise(t, y):
                return y[0] - np.log(-_LOG_SWITCH)
            rise.terminal = True
            # cheap phase: few steps, so a tighter tolerance costs little
            res = _run(wrhs, [np.log(-l0)], 0.0, t_end, [rise], method, min(rtol, 1e-12), 0.0)
            if res.status not in (0, 1):
                raise IntegrationError(res.message)
            segments.append(Segment(0.0, float(res.t[-1]), _Pad(res.sol), False))
            t0, start = float(res.t[-1]), float(-np.exp(res.y[0, -1]))
        if t0 < t_end:
            def rhs(t, y):
                lp = slope(y[0])
                return [lp, 1.0 - y[1] * lp]
            k0 = 1.0 / slope(start) if segments else 0.0
            res = _run(rhs, [start, k0], t0, t_end, [blow], method, rtol, atol)
            if res.status == 1 or (res.status == -1 and res.y[0, -1] > 0.5 * cap):
                raise ProfileBlowup(f"g' = C phi(g) from log g(0) = {l0:.6g} blows up at "
                                    f"t = {res.t[-1]:.6g} < {t_end:g}")
            if res.status != 0:
                raise IntegrationError(res.message)
            segments.append(Segment(t0, float(t_end), res.sol, True))
    return LogProfile(tuple(segments), float(t_end), l0, True, slope)


class _Pad:
    """Present a phase-one solution in ``w = log(-l)`` as rows ``(l, 0)``."""

    def __init__(self, sol):
        self.sol = sol
        self.ts = sol.ts
        self.interpolants = [_PadPiece(p) for p in sol.interpolants]

    def __call__(self, t):
        w = self.sol(t)[0]
        return np.vstack([-np.exp(w), np.zeros_like(w)])


class _PadPiece:
    def __init__(self, piece):
        self.piece, self.t, self.t_old = piece, piece.t, piece.t_old

    def __call__(self, t):
        return -np.exp(self.piece(t))

    def raw(self, t):
        return self.piece(t)[0]

    def raw_slope(self, w, slope):
        l = -np.exp(w)
        return slope(l) / l


def integrate_decay(phi, C, nu, t_end, method=RK_METHOD, rtol=RTOL, atol=ATOL, floor=True):
    """Integrate f' = -C phi(f), f(0) = nu.

    With ``floor`` the run stops where f drops below e^-700 (finite-time
    extinction); without it log f is followed however small f becomes.
    """
    if not nu > 0:
        raise ValueError("initial value must be positive")
    l0 = float(np.log(nu))

    def slope(l):
        return -C * phi.log_ratio(l)

    def rhs(t, y):
        return [slope(y[0]), np.exp(y[0] - l0)]

    def low(t, y):
        return y[0] - _LOG_FLOOR
    low.terminal = True

    with np.errstate(over="ignore", under="ignore"):
        res = _run(rhs, [l0, 0.0], 0.0, t_end, [low] if floor else None, method, rtol, atol)
    if res.status == -1:
        if res.y[0, -1] - l0 > _EXTINCT_REL:
            raise IntegrationError(res.message)
    elif res.status not in (0, 1):
        raise IntegrationError(res.message)
    t_stop = float(res.t[-1])
    return LogProfile((Segment(0.0, t_stop, res.sol, True),), t_stop, l0, False, slope)
