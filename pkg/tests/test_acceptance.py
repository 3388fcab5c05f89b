"""Acceptance suite: one test per criterion, each with its runtime limit.

Each test prints (and records for the terminal summary) a single line
``criterion N: PASS|FAIL ...``.
"""

import math
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.integrate import quad

from barrierlab.barriers import (GROWING_SUPER, NEGATED_SUB, POSITIVE_SUB_ANNULUS, SUB_ANNULUS,
                                 StructureBounds, build_barrier, build_exp_barrier, crux_value,
                                 eval_barrier, verify_strictness)
from barrierlab.cli import main
from barrierlab.counterexamples import build_gradient_blowup, build_smap_counterexample, ode_residual
from barrierlab.exceptions import RadiusTooLarge, StrictnessViolation
from barrierlab.geometry import Annulus, make_grid
from barrierlab.nonlinearity import (KELLER_OSSERMAN, OSGOOD, GrowthFunction,
                                     check_integral_condition, check_phi_B, phi_b_integral,
                                     power_law_closed_form)
from barrierlab.solver import ExponentField, check_weak_comparison, radial_reference, solve
from barrierlab.spectral import EllipticityPair
from barrierlab.verification import (LineFunction, boundary_harnack_quotient, check_smap,
                                     distance_comparability)

from conftest import ACCEPTANCE_LINES

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
ANNULUS = Annulus((0.0, 0.0), 1.0, 2.0)
W = np.array([1.0, 0.0])
KINDS = (SUB_ANNULUS, POSITIVE_SUB_ANNULUS, NEGATED_SUB, GROWING_SUPER)


def step(x):
    return np.where(np.linalg.norm(x, axis=1) < 1.5, 0.0, 1.0)


def p_theta(x):
    return 2 + 0.3 * np.sin(np.arctan2(x[:, 1], x[:, 0]))


def record(n, ok, elapsed, limit, detail):
    ok = bool(ok) and (limit is None or elapsed < limit)
    lim = "" if limit is None else f" < {limit:g} s"
    line = f"criterion {n}: {'PASS' if ok else 'FAIL'} ({elapsed:.2f} s{lim}) {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    return ok


def test_criterion_1_power_law_conditions():
    t0 = time.perf_counter()
    bad = []
    for k in (1.0, 1.5, 2.0, 2.5, 3.0):
        phi = GrowthFunction.power_law(k)
        if check_phi_B(phi).holds != (k <= 2):
            bad.append(f"phiB k={k}")
        for nu in (1.0, 10.0, 1e3):
            if k == 1:
                f = lambda t: nu * math.exp(-t)
            else:
                f = lambda t: ((k - 1) * t + nu ** (1 - k)) ** (1 / (1 - k))
            q = phi_b_integral(phi, 1.0, nu)
            exact = quad(f, 0, 1, epsabs=0, epsrel=1e-13, limit=400, points=[1e-6, 1e-4, 1e-2])[0]
            closed = power_law_closed_form(k, 1.0, nu)
            if abs(q - closed) > 1e-8 * closed or abs(exact - closed) > 1e-8 * closed:
                bad.append(f"closed form k={k} nu={nu}")
        if check_integral_condition(phi, OSGOOD).verdict != "Divergent":
            bad.append(f"Osgood k={k}")
        if (check_integral_condition(phi, KELLER_OSSERMAN).verdict == "Divergent") != (k <= 1):
            bad.append(f"KO k={k}")
    elapsed = time.perf_counter() - t0
    assert record(1, not bad, elapsed, 5, "mismatches: " + (", ".join(bad) or "none")), bad


def random_configs(n=20, seed=0):
    rng = np.random.default_rng(seed)
    phis = [GrowthFunction.power_law(1), GrowthFunction.var_exp_log(1)]
    for i in range(n):
        lam = rng.uniform(0.3, 1.0)
        Lam = rng.uniform(lam, 3.0)
        dim = int(rng.integers(2, 6))
        r_star = rng.uniform(0.2, 1.0)
        r = rng.uniform(0.1, 1.0) * r_star
        M = rng.uniform(0.5, 5.0)
        B = StructureBounds(EllipticityPair(lam, Lam), dim, phis[i % 2], GrowthFunction.power_law(1), 1.0)
        yield B, r, r_star, M


def test_criterion_2_barrier_strictness():
    t0 = time.perf_counter()
    bad, worst = [], {k: [] for k in KINDS}
    for i, (B, r, r_star, M) in enumerate(random_configs()):
        y = np.zeros(B.n)
        for kind in KINDS:
            try:
                b = build_barrier(B, y, r, r_star, kind, M)
                rep = verify_strictness(b, B, 10_000)
                worst[kind].append(rep.worst)
            except Exception as exc:  # report every failure, not just the first
                bad.append(f"#{i} {kind}: {type(exc).__name__}")
        lam, Lam = B.ell.lam, B.ell.Lam
        C_half = 0.5 * (r + Lam * (B.n - 1)) / lam
        b = build_barrier(B, y, r, r_star, SUB_ANNULUS, M, C=C_half)
        try:
            verify_strictness(b, B, 10_000)
            bad.append(f"#{i} halved C certified")
        except StrictnessViolation:
            pass
    elapsed = time.perf_counter() - t0
    spans = " ".join(f"{k}[{min(v):.3g},{max(v):.3g}]" for k, v in worst.items() if v)
    assert record(2, not bad, elapsed, 60, f"{len(bad)} failures; worst margins {spans}"), bad


def _orders(b, x):
    """Empirical orders of the gradient and Hessian differences, plus a roundoff flag.

    A pair whose error at h = 1e-4 is within 10x of the rounding floor
    ``eps |v| / h`` (gradient) or ``eps |Dv| / h`` (Hessian) is flagged.
    """
    v, g, H = eval_barrier(b, x)
    errs = []
    for h in (1e-3, 1e-4):
        E = np.eye(len(x)) * h
        gf = np.array([(eval_barrier(b, x + e)[0] - eval_barrier(b, x - e)[0]) / (2 * h) for e in E])
        Hf = np.array([(eval_barrier(b, x + e)[1] - eval_barrier(b, x - e)[1]) / (2 * h) for e in E])
        errs.append((np.abs(gf - g).max(), np.abs(Hf - H.array).max()))
    eps = np.finfo(float).eps
    floors = (eps * abs(v) / 1e-4, eps * np.abs(g).max() / 1e-4)
    out = []
    for (a, c), floor in zip(zip(*errs), floors):
        if a == 0 and c == 0:
            out.append((math.inf, False))
        else:
            with np.errstate(divide="ignore"):
                out.append((math.log10(a / c) if c > 0 else math.inf, c < 10 * floor))
    return out


def test_criterion_3_derivative_consistency():
    t0 = time.perf_counter()
    results = []
    for B, r, r_star, M in list(random_configs())[:6]:
        y = np.linspace(-0.2, 0.3, B.n)
        direction = np.arange(1, B.n + 1, dtype=float)
        direction /= np.linalg.norm(direction)
        barriers = [build_barrier(B, y, r, r_star, kind, M) for kind in KINDS]
        barriers.append(build_exp_barrier(1.5, 2.5, 2, 2, 0.1, B.n, M, min(r, 0.1), center=y)[0])
        for b in barriers:
            lo, hi = b.radii
            for frac in (0.25, 0.6):
                for which, (order, roundoff) in zip("gH", _orders(b, y + direction * (lo + frac * (hi - lo)))):
                    results.append((order, roundoff, f"{b.kind}/{which}"))
    elapsed = time.perf_counter() - t0
    low = [(o, f, k) for o, f, k in results if o < 1.9]
    at_floor = sum(f for _, f, _ in low)
    worst = min(o for o, _, _ in results)
    detail = (f"min empirical order {worst:.3f} over {len(results)} checks; {len(low)} below 1.9 "
              f"({at_floor} at the rounding floor, {len(low) - at_floor} pre-asymptotic at h = 1e-3)")
    assert record(3, not low, elapsed, 30, detail), low


def test_criterion_4_counterexamples():
    t0 = time.perf_counter()
    H = build_smap_counterexample(GrowthFunction.power_law(0.5), extend=True)
    res_H = ode_residual(H, np.arange(0.1, 0.9, 1e-3))
    cube = GrowthFunction.power_law(3)
    F = build_gradient_blowup(cube, 10.0)
    res_F = ode_residual(F, np.arange(0.1, 0.4, 1e-4))
    smap = check_smap(LineFunction.from_function(H.value, -3.0, 1.0, 4001))
    plateau = (not smap.passed) and smap.measured["plateau_nodes"] > 0
    slopes, fixed = [], []
    for nu in (1e2, 1e4, 1e6):
        Fn = build_gradient_blowup(cube, nu, check=False)
        s = 1e-3 / nu ** 2
        slopes.append(float(Fn.value(s)) / s)
        fixed.append(float(Fn.value(1e-4)) / 1e-4)
    growing = all(b > 10 * a for a, b in zip(slopes, slopes[1:])) and fixed[0] < fixed[1] < fixed[2]
    ok = res_H <= 1e-5 and res_F <= 1e-5 and plateau and growing
    elapsed = time.perf_counter() - t0
    assert record(4, ok, elapsed, 10,
                  f"res_H={res_H:.2e} res_F={res_F:.2e} plateau={smap.measured.get('plateau_nodes')} "
                  f"slopes={[round(v, 1) for v in slopes]}"), (res_H, res_F, smap.measured, slopes)


def test_criterion_5_solver_oracle():
    t0 = time.perf_counter()
    targets = {2: 0.58496, 4: 0.52837}
    ok, parts = True, []
    for p in (2, 4):
        ref = radial_reference(p)
        errs = {}
        for h in (0.04, 0.02, 0.01):
            g = make_grid(ANNULUS, h)
            u = solve(g, ExponentField(p), step)
            errs[h] = np.abs(u.values - ref(np.linalg.norm(g.points, axis=1))).max()
            if h == 0.02:
                mid = float(u([1.5, 0.0]))
        e = [errs[h] for h in (0.04, 0.02, 0.01)]
        orders = np.log2(np.array(e[:-1]) / e[1:])
        rel = abs(mid - targets[p]) / targets[p]
        ok &= errs[0.02] <= 5 * 0.02 ** 2 and orders.min() >= 1.58 and rel <= 0.01
        parts.append(f"p={p}: err/h^2={errs[0.02] / 0.02 ** 2:.3f} orders={np.round(orders, 2).tolist()} "
                     f"u(1.5)={mid:.5f}")
    elapsed = time.perf_counter() - t0
    assert record(5, ok, elapsed, 120, "; ".join(parts)), parts


def test_criterion_6_discrete_comparison():
    t0 = time.perf_counter()
    src = lambda x: np.sin(3 * x[:, 0]) * np.cos(2 * x[:, 1])
    scenarios = [
        (ExponentField(2, 2, -1.0), (step, None), (lambda x: step(x) + 0.1, None)),
        (ExponentField(3, 2, -0.5), (step, src), (step, lambda x: src(x) + 1)),
        (ExponentField(p_theta, 3, -1.0, 1.7, 2.3, 0.3), (step, src),
         (lambda x: step(x) + 0.1, lambda x: src(x) + 0.5 * x[:, 0] ** 2)),
    ]
    ok, parts = True, []
    for h in (0.04, 0.02):
        g = make_grid(ANNULUS, h)
        for i, (exp, du, dv) in enumerate(scenarios):
            rep = check_weak_comparison(g, exp, du, dv)
            ok &= rep.min_difference >= -10 * h ** 2
            parts.append(f"h={h} s{i + 1}:{rep.min_difference:.2e}")
    elapsed = time.perf_counter() - t0
    assert record(6, ok, elapsed, 120, "min(v-u) " + " ".join(parts)), parts


def test_criterion_7_boundary_estimates():
    t0 = time.perf_counter()
    u = solve(make_grid(ANNULUS, 0.01), ExponentField(2), step)
    dc = distance_comparability(u, ANNULUS, W, 0.005, hi=10, reach=20)
    c_high = dc.measured["c_high"]
    oracle_ok = dc.passed and abs(c_high - 1 / math.log(2)) <= 0.05 / math.log(2)
    bh = boundary_harnack_quotient(u, u.with_values(2 * u.values), ANNULUS, W, 0.1)
    exact_half = bh.measured["min"] == 0.5 and bh.measured["max"] == 0.5

    exp = ExponentField(p_theta, 2, 0.0, 1.7, 2.3, 0.3)
    fields = {}
    for h in (0.02, 0.01):
        g = make_grid(ANNULUS, h)
        fields[h] = (solve(g, exp, step), solve(g, exp, lambda x: 2 * step(x)))
    (uc, vc), (uf, vf) = fields[0.02], fields[0.01]
    dv = distance_comparability(uc, ANNULUS, W, 0.05, refined=uf)
    hv = boundary_harnack_quotient(uc, vc, ANNULUS, W, 0.1, refined=(uf, vf))
    in_range = 0.3 <= min(hv.measured["min_all"]) and max(hv.measured["max_all"]) <= 3
    ok = oracle_ok and exact_half and dv.passed and hv.passed and in_range
    elapsed = time.perf_counter() - t0
    assert record(7, ok, elapsed, 180,
                  f"c_high={c_high:.5f} (1/log 2=1.44270) harnack=[{bh.measured['min']},{bh.measured['max']}] "
                  f"var-p c_high={np.round(dv.measured['c_high_all'], 3).tolist()} "
                  f"quotient={np.round(hv.measured['min_all'], 3).tolist()}..{np.round(hv.measured['max_all'], 3).tolist()}"
                  ), (dc.measured, bh.measured, dv.measured, hv.measured)


def test_criterion_8_exponential_barrier():
    t0 = time.perf_counter()
    args = (1.5, 2.5, 2, 2, 0.1, 2, 1.0, 0.1)
    b, mu = build_exp_barrier(*args)
    crux = crux_value(mu, *args)
    try:
        build_exp_barrier(1.5, 2.5, 2, 2, 0.1, 2, 1.0, 2.0)
        rejected = False
    except RadiusTooLarge:
        rejected = True
    ok = mu <= 4 and crux <= 0 and rejected
    elapsed = time.perf_counter() - t0
    assert record(8, ok, elapsed, 1, f"mu_exp={mu:g} crux={crux:.4f} r=2 rejected={rejected}"), (mu, crux)


@pytest.mark.parametrize("config", ["solve_p4_annulus", "reproduce_figure1"])
def test_criterion_9_determinism(tmp_path, config):
    t0 = time.perf_counter()
    outs = [tmp_path / k for k in ("first", "second")]
    codes = [main(["run", "--config", str(CONFIGS / f"{config}.json"), "--out", str(o), "--seed", "11"])
             for o in outs]
    names = sorted(p.name for p in outs[0].glob("*.csv"))
    same = bool(names) and all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    elapsed = time.perf_counter() - t0
    assert record(9, same and codes == [0, 0], elapsed, None,
                  f"{config}: {len(names)} CSV files byte-identical={same}"), names
