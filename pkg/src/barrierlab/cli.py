"""Command line runner: ``barrierlab run --config CFG --out DIR`` and ``barrierlab report DIR``.

Exit codes: 0 when every check of the experiment passes, 2 when a check
fails, 1 on errors (bad config, unreadable artifacts, numerical failure).
"""

import argparse
import copy
import csv
import io
import json
import logging
import math
import os
import re
import sys
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator
from jsonschema.exceptions import best_match
from threadpoolctl import threadpool_limits

from . import barriers, counterexamples, geometry, solver, verification
from .exceptions import BarrierLabError
from .nonlinearity import (KELLER_OSSERMAN, OSGOOD, GrowthFunction, check_integral_condition,
                           check_phi_B)
from .spectral import EllipticityPair

log = logging.getLogger("barrierlab")

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2
REPORT = "report.json"


class ConfigError(Exception):
    pass


def load_schema(name):
    return json.loads(resources.files("barrierlab").joinpath("schemas", name).read_text("utf-8"))


def _line_of(text, path, extra=None):
    """Best-effort line number of a JSON path (plus an offending key) in ``text``."""
    pos = 0
    keys = [k for k in path if isinstance(k, str)] + ([extra] if extra else [])
    for key in keys:
        j = text.find(f'"{key}"', pos)
        if j < 0:
            break
        pos = j
    return text.count("\n", 0, pos) + 1


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text("utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    err = best_match(Draft202012Validator(load_schema("config.schema.json")).iter_errors(cfg))
    if err is not None:
        m = re.search(r"'([^']+)' (?:was|were) unexpected", err.message)
        line = _line_of(text, list(err.absolute_path), m.group(1) if m else None)
        where = "/".join(map(str, err.absolute_path)) or "<root>"
        raise ConfigError(f"{path}:{line}: {where}: {err.message}")
    return cfg


# ---------------------------------------------------------------- field specs

def make_field(spec):
    """Constant or callable of ``(m, 2)`` points from a config field spec."""
    if spec is None or isinstance(spec, (int, float)):
        return 0.0 if spec is None else float(spec)
    kind = spec["kind"]
    c = np.asarray(spec.get("center", [0.0, 0.0]), dtype=float)
    if kind == "angular":
        base, amp, k = spec["base"], spec["amplitude"], spec.get("frequency", 1.0)

        def f(x):
            z = x - c
            return base + amp * np.sin(k * np.arctan2(z[:, 1], z[:, 0]))
    elif kind == "radial_step":
        split = spec.get("split")

        def f(x):
            rho = np.linalg.norm(x - c, axis=1)
            return np.where(rho < split, spec["inner"], spec["outer"])
        if split is None:
            raise ConfigError("radial_step needs 'split'")
    elif kind == "affine":
        g, off = np.asarray(spec["gradient"], dtype=float), spec.get("offset", 0.0)

        def f(x):
            return x @ g + off
    elif kind == "trig":
        amp, kx, ky, off = spec["amplitude"], spec.get("kx", 1.0), spec.get("ky", 1.0), spec.get("offset", 0.0)

        def f(x):
            return off + amp * np.sin(kx * x[:, 0]) * np.cos(ky * x[:, 1])
    else:
        raise ConfigError(f"unknown field kind {kind!r}")
    return f


def _annulus_step(domain, spec):
    """Fill in the split radius of a radial step from an annulus domain."""
    if isinstance(spec, dict) and spec.get("kind") == "radial_step" and "split" not in spec:
        if not isinstance(domain, geometry.Annulus):
            raise ConfigError("radial_step without 'split' needs an Annulus domain")
        spec = dict(spec, split=0.5 * (domain.r_in + domain.r_out), center=list(domain.center))
    return spec


def _scaled(spec, factor):
    if isinstance(spec, (int, float)):
        return spec * factor
    spec = dict(spec)
    for key in ("inner", "outer", "base", "amplitude", "offset"):
        if key in spec:
            spec[key] = spec[key] * factor
    if "gradient" in spec:
        spec["gradient"] = [factor * g for g in spec["gradient"]]
    return spec


def _require(cfg, *keys):
    missing = [k for k in keys if k not in cfg]
    if missing:
        raise ConfigError(f"experiment {cfg['experiment']!r} needs {', '.join(missing)}")


def _exponents(cfg):
    e = cfg.get("exponents", {})
    p, q = make_field(e.get("p", 2.0)), make_field(e.get("q", 2.0))
    return solver.ExponentField(p, q, float(e.get("a", 0.0)), e.get("p_minus"), e.get("p_plus"),
                                e.get("grad_p"), json.dumps(e.get("p", 2.0), sort_keys=True))


def _solver_cfg(cfg):
    return solver.SolverConfig(**cfg.get("solver", {}))


def _domain(cfg):
    _require(cfg, "domain")
    return geometry.domain_from_dict(cfg["domain"])


# ---------------------------------------------------------------- CSV helpers

def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    return "%.17g" % float(v)


def _csv(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------- experiments

def exp_analyze_phi(cfg, out):
    _require(cfg, "nonlinearity")
    phi = GrowthFunction.from_dict(cfg["nonlinearity"])
    osg = check_integral_condition(phi, OSGOOD)
    try:
        ko = check_integral_condition(phi, KELLER_OSSERMAN)
    except BarrierLabError as exc:
        ko = None
        log.info("Keller-Osserman test skipped: %s", exc)
    pb = check_phi_B(phi)
    measured = {"Osgood": osg.verdict, "KellerOsserman": ko.verdict if ko else None,
                "PhiB": pb.verdict, "osgood_limit": osg.limit, "phi_b_limit": pb.limit}
    checks = {}
    for key, want in cfg.get("expect", {}).items():
        checks[f"expect_{key}"] = measured[key] == want
    nus = [10.0 ** i for i in range(len(pb.diagnostics))]
    files = {"phi_b.csv": _csv(["nu", "integral"], zip(nus, pb.diagnostics)),
             "osgood.csv": _csv(["sample", "partial_sum"], enumerate(osg.diagnostics))}
    return measured, checks, files


def _bounds(cfg):
    _require(cfg, "nonlinearity", "structure")
    s = cfg["structure"]
    gamma = GrowthFunction.from_dict(s["gamma"]) if "gamma" in s else None
    return barriers.StructureBounds(EllipticityPair(s["lam"], s["Lam"]), s["n"],
                                    GrowthFunction.from_dict(cfg["nonlinearity"]), gamma,
                                    s.get("C_star", 0.0))


def exp_build_barrier(cfg, out):
    _require(cfg, "barrier")
    b = cfg["barrier"]
    if b["kind"] == barriers.EXP_SUPER:
        for key in ("p_minus", "p_plus", "grad_p"):
            if key not in b:
                raise ConfigError(f"ExpSuper barrier needs {key!r}")
        n = b.get("n", 2)
        bar, mu = barriers.build_exp_barrier(b["p_minus"], b["p_plus"], b.get("q_minus", 2.0),
                                             b.get("q_plus", 2.0), b["grad_p"], n, b["M"], b["r"],
                                             b.get("a", 0.0))
        args = (b["p_minus"], b["p_plus"], b.get("q_minus", 2.0), b.get("q_plus", 2.0),
                b["grad_p"], n, b["M"], b["r"], b.get("a", 0.0))
        crux = barriers.crux_value(mu, *args)
        rho = np.linspace(b["r"], 2 * b["r"], 201)
        val, d1, d2 = bar.radial(rho)
        measured = {"kind": bar.kind, "mu": mu, "crux": crux, "worst_margin": -crux}
        files = {"profile.csv": _csv(["rho", "value", "d1", "d2"], zip(rho, val, d1, d2))}
        return measured, {"crux_nonpositive": crux <= 0}, files
    bounds = _bounds(cfg)
    n = bounds.n
    center = b.get("center", [0.0] * n)
    bar = barriers.build_barrier(bounds, center, b["r"], b.get("r_star", b["r"]), b["kind"],
                                 b["M"], b.get("offset", 0.0), b.get("C"))
    rep = barriers.verify_strictness(bar, bounds, b.get("stations", 10_000), raise_on_violation=False)
    t, v = bar.profile.samples
    measured = {"kind": bar.kind, "C": bar.C, "m": bar.m, "k": bar.k,
                "log_initial": bar.profile.log_initial, "worst_margin": rep.worst,
                "worst_radius": rep.worst_radius, "profile_residual": bar.profile.residual()}
    files = {"profile.csv": _csv(["t", "value"], zip(t, v)), "margins.csv": rep.to_csv()}
    checks = {"strict": rep.passed, "profile_residual": measured["profile_residual"] <= 1e-8}
    return measured, checks, files


RESIDUAL_BOUND = 1e-5


def _counterexample(phi, spec):
    if spec["kind"] == "smap":
        c = counterexamples.build_smap_counterexample(phi, extend=spec.get("extend", False))
        lo, hi = spec.get("residual_interval", [0.1, 0.9])
        step = spec.get("residual_step", 1e-3)
    else:
        c = counterexamples.build_gradient_blowup(phi, spec.get("nu", 10.0), spec.get("eps", 1.0))
        lo, hi = spec.get("residual_interval", [0.1, 0.4])
        step = spec.get("residual_step", 1e-4)
    grid = np.arange(lo, hi + 0.5 * step, step)
    return c, counterexamples.ode_residual(c, grid, step)


def exp_counterexample(cfg, out):
    _require(cfg, "nonlinearity", "counterexample")
    spec = cfg["counterexample"]
    phi = GrowthFunction.from_dict(cfg["nonlinearity"])
    c, res = _counterexample(phi, spec)
    measured = {"kind": c.kind, "residual": res, "interval": list(c.interval)}
    if c.kind == counterexamples.BLOWUP:
        measured["slope_at_0"] = float(c.derivative(0.0))
    files = {"samples.csv": c.to_csv(spec.get("samples", 2001))}
    return measured, {"residual": res <= RESIDUAL_BOUND}, files


def _solve(cfg, domain, h, boundary=None):
    grid = geometry.make_grid(domain, h)
    exp = _exponents(cfg)
    exp.check(grid)
    bspec = _annulus_step(domain, cfg.get("boundary", 0.0) if boundary is None else boundary)
    sspec = _annulus_step(domain, cfg.get("source", 0.0))
    return solver.solve(grid, exp, make_field(bspec), make_field(sspec), _solver_cfg(cfg))


def _grid_h(cfg):
    _require(cfg, "grid_h")
    return float(cfg["grid_h"])


def _solution_files(u, prefix=""):
    info = u.info
    rows = zip(range(len(info["residual_history"])), info["residual_history"], info["energy_history"])
    return {f"{prefix}solution.csv": u.to_csv(),
            f"{prefix}history.csv": _csv(["iteration", "residual", "energy"], rows)}


def exp_solve(cfg, out):
    domain = _domain(cfg)
    h = _grid_h(cfg)
    u = _solve(cfg, domain, h)
    measured = {"residual": u.info["residual"], "iterations": u.info["iterations"], "h": h,
                "unknowns": u.grid.n_unknowns,
                "lipschitz_ratio": geometry.lipschitz_ratio(domain, rng=cfg.get("seed", 0))}
    checks = {"converged": u.info["residual"] <= _solver_cfg(cfg).tol}
    e = cfg.get("exponents", {})
    b = cfg.get("boundary")
    # radial oracle for constant p, a = 0, no source and step data on an annulus
    if (isinstance(domain, geometry.Annulus) and isinstance(e.get("p", 2.0), (int, float))
            and e.get("a", 0.0) == 0 and cfg.get("source", 0.0) == 0
            and isinstance(b, dict) and b.get("kind") == "radial_step"):
        ref = solver.radial_reference(e.get("p", 2.0), 2, domain.r_in, domain.r_out,
                                      b["inner"], b["outer"])
        rho = np.linalg.norm(u.points - np.asarray(domain.center), axis=1)
        err = float(np.max(np.abs(u.values - ref(rho))))
        measured["oracle_max_error"] = err
        checks["oracle_5h2"] = err <= 5 * h ** 2
    return measured, checks, _solution_files(u)


def _verification(cfg, domain):
    v = dict(cfg.get("verification", {}))
    if "w" not in v:
        if isinstance(domain, geometry.Annulus):
            v["w"] = [domain.center[0] + domain.r_in, domain.center[1]]
        else:
            raise ConfigError("verification needs 'w' for this domain")
    return v


def exp_verify_boundary(cfg, out):
    domain = _domain(cfg)
    h = _grid_h(cfg)
    v = _verification(cfg, domain)
    w, r = np.asarray(v["w"], dtype=float), v.get("r", 0.05)
    band = dict(lo=v.get("lo", 1.0), hi=v.get("hi", 3.0), reach=v.get("reach", 6.0))
    bspec = cfg.get("boundary", 0.0)
    u = _solve(cfg, domain, h)
    u2 = _solve(cfg, domain, h, _scaled(bspec, 2.0))
    fine = fine2 = None
    if v.get("refine", True):
        fine = _solve(cfg, domain, h / 2)
        fine2 = _solve(cfg, domain, h / 2, _scaled(bspec, 2.0))
    dc = verification.distance_comparability(u, domain, w, r, refined=fine, **band)
    bh = verification.boundary_harnack_quotient(u, u2, domain, w, v.get("harnack_r", 2 * r),
                                                cap=v.get("cap", 10.0),
                                                refined=None if fine is None else (fine, fine2))
    measured = {"c_high": dc.measured["c_high"], "c_low": dc.measured["c_low"],
                "c_high_all": dc.measured["c_high_all"], "c_low_inv_all": dc.measured["c_low_inv_all"],
                "quotient_min": bh.measured["min"], "quotient_max": bh.measured["max"],
                "quotient_min_all": bh.measured["min_all"], "quotient_max_all": bh.measured["max_all"],
                "band_nodes": dc.measured["band_nodes"], "h": h}
    files = {"solution.csv": u.to_csv(), "distance_scatter.csv": dc.scatter_csv(),
             "harnack_scatter.csv": bh.scatter_csv()}
    return measured, {"distance_comparability": dc.passed, "boundary_harnack": bh.passed}, files


def exp_verify_smap(cfg, out):
    if "counterexample" in cfg:
        _require(cfg, "nonlinearity")
        phi = GrowthFunction.from_dict(cfg["nonlinearity"])
        spec = dict(cfg["counterexample"], kind="smap")
        c = counterexamples.build_smap_counterexample(phi, extend=spec.get("extend", True))
        n = spec.get("samples", 4001)
        line = verification.LineFunction.from_function(c.value, c.interval[0], c.interval[1], n)
        sm = verification.check_smap(line)
        half = verification.LineFunction.from_function(c.value, -1.0, 0.0, (n - 1) // 4 + 1)
        hp = verification.check_hopf_slope(half, w=0.0)
        files = {"samples.csv": c.to_csv(n)}
    else:
        domain = _domain(cfg)
        h = _grid_h(cfg)
        v = _verification(cfg, domain)
        u = _solve(cfg, domain, h)
        sm = verification.check_smap(u)
        hp = verification.check_hopf_slope(u, domain, v["w"], v.get("direction"))
        files = _solution_files(u)
    measured = {"smap": sm.measured, "hopf_slope": hp.measured, "smap_witness": list(sm.witness)}
    return measured, {"smap": sm.passed, "hopf": hp.passed}, files


def exp_reproduce_figure1(cfg, out):
    """Panels: (A) g' = C phi(g), (B) f' = -C phi(f), (C) H for sqrt, (D) F for t^3."""
    files, panels, checks = {}, {}, {}
    phi = GrowthFunction.from_dict(cfg.get("nonlinearity", {"kind": "PowerLaw",
                                                            "params": {"exponent": 1.0}}))
    bounds = barriers.StructureBounds(EllipticityPair(1.0, 1.0), 2, phi)
    C = barriers.choose_C(bounds, 1.0)
    for name, kind, start in (("A", "G", None), ("B", "F", 2.0)):
        if kind == "G":
            prof = barriers.solve_profile(bounds, C, 1e-3, "G")
        else:
            prof = barriers.solve_profile(bounds, C, start, "F", 1.0)
        t, vals = prof.samples
        files[f"panel_{name}.csv"] = _csv(["t", "value"], zip(t, vals))
        res = prof.residual()
        panels[name] = {"C": C, "initial": prof.initial, "residual": res}
        checks[f"panel_{name}"] = res <= 1e-8
    for name, phi_c, spec in (("C", GrowthFunction.power_law(0.5), {"kind": "smap", "extend": True}),
                              ("D", GrowthFunction.power_law(3.0), {"kind": "gradient_blowup", "nu": 10.0})):
        c, res = _counterexample(phi_c, spec)
        files[f"panel_{name}.csv"] = c.to_csv(cfg.get("counterexample", {}).get("samples", 2001))
        panels[name] = {"kind": c.kind, "residual": res, "interval": list(c.interval)}
        checks[f"panel_{name}"] = res <= RESIDUAL_BOUND
    return {"panels": panels}, checks, files


EXPERIMENTS = {
    "analyze-phi": exp_analyze_phi,
    "build-barrier": exp_build_barrier,
    "counterexample": exp_counterexample,
    "solve": exp_solve,
    "verify-boundary": exp_verify_boundary,
    "verify-smap": exp_verify_smap,
    "reproduce-figure1": exp_reproduce_figure1,
}


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(type(o).__name__)


def _clean(o):
    """Replace non-finite floats (not valid JSON) by their string names."""
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    return o


def run_experiment(cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    measured, checks, files = EXPERIMENTS[cfg["experiment"]](cfg, out)
    for name in sorted(files):
        (out / name).write_text(files[name], encoding="utf-8", newline="")
    passed = all(checks.values())
    report = {"id": cfg.get("id", out.name), "experiment": cfg["experiment"],
              "status": "pass" if passed else "fail",
              "exit_code": EXIT_PASS if passed else EXIT_FAIL,
              "measured": measured, "checks": {k: bool(v) for k, v in checks.items()},
              "artifacts": sorted(files), "config": cfg}
    report = _clean(json.loads(json.dumps(report, default=_jsonable)))
    Draft202012Validator(load_schema("report.schema.json")).validate(report)
    (out / REPORT).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report


def cmd_run(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    cfg = copy.deepcopy(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.grid_h is not None:
        cfg["grid_h"] = args.grid_h
    cfg.setdefault("id", Path(args.config).stem)
    threads = os.environ.get("BARRIERLAB_THREADS")
    try:
        limit = int(threads) if threads else None
    except ValueError:
        print(f"error: BARRIERLAB_THREADS must be an integer, got {threads!r}", file=sys.stderr)
        return EXIT_ERROR
    try:
        with threadpool_limits(limits=limit):
            report = run_experiment(cfg, args.out)
    except (ConfigError, BarrierLabError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    print(f"{report['id']}: {report['status']}")
    return report["exit_code"]


def cmd_report(args):
    root = Path(args.index)
    paths = sorted(root.rglob(REPORT)) if root.is_dir() else []
    if not paths:
        print(f"error: no {REPORT} under {root}", file=sys.stderr)
        return EXIT_ERROR
    rows, seen = [], {}
    for p in paths:
        rel = str(p.parent.relative_to(root)) or "."
        try:
            rep = json.loads(p.read_text("utf-8"))
            Draft202012Validator(load_schema("report.schema.json")).validate(rep)
            rid = rep["id"]
            row = {"id": rid, "path": rel, "status": rep["status"], "exit_code": rep["exit_code"],
                   "experiment": rep["experiment"],
                   "measured": {k: v for k, v in rep["measured"].items()
                                if isinstance(v, (int, float, str)) or v is None}}
        except Exception as exc:  # any unreadable artifact becomes a flagged row
            log.info("unreadable report %s: %s", p, exc)
            row = {"id": rel, "path": rel, "status": "unreadable", "exit_code": EXIT_ERROR,
                   "experiment": None, "measured": {}}
        n = seen.get(row["id"], 0)
        seen[row["id"]] = n + 1
        if n:
            row["id"] = f"{row['id']}#{n}"
        rows.append(row)
    summary = {"runs": rows}
    Draft202012Validator(load_schema("summary.schema.json")).validate(summary)
    out = Path(args.out) if args.out else root
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    table = _csv(["id", "experiment", "status", "exit_code", "path"],
                 ([r["id"], r["experiment"] or "", r["status"], r["exit_code"], r["path"]]
                  for r in rows))
    (out / "summary.csv").write_text(table, encoding="utf-8", newline="")
    sys.stdout.write(table)
    codes = {r["exit_code"] for r in rows}
    if EXIT_ERROR in codes:
        return EXIT_ERROR
    return EXIT_FAIL if EXIT_FAIL in codes else EXIT_PASS


def build_parser():
    ap = argparse.ArgumentParser(prog="barrierlab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment from a JSON config")
    run.add_argument("--config", required=True, help="experiment config (JSON)")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--grid-h", type=float, default=None, help="override grid spacing")
    run.set_defaults(func=cmd_run)
    rep = sub.add_parser("report", help="summarize prior runs")
    rep.add_argument("index", help="directory holding run outputs")
    rep.add_argument("--out", default=None, help="where to write summary.json/csv")
    rep.set_defaults(func=cmd_report)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
