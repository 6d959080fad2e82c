"""Batch front-end: ``superefimov {tune,spectrum,count-scan,validate}``.

Exit codes: 0 ok, 2 config error, 3 missing artifact, 4 acceptance failure,
5 insufficient data.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import re
import sys
import time
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Optional

import numpy as np

from . import counting, three_body, two_body
from .numerics import InvalidArgument, LogScalar
from .potential import PotentialModel, psi_transform

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_FAIL = 4
EXIT_DATA = 5

PROXY_NOTE = ("counts are the operator-chain proxy n(T+ (+) T-, a) for the number of "
              "three-body bound states below -z^2")
OPERATOR_LABELS = ("scriptT", "Tplus", "Tminus", "Ta", "B1", "B2", "B3", "S")
SUITES = ("dnorm", "weyl", "remainders", "envelope")


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration
# --------------------------------------------------------------------------

def parse_log(text) -> float:
    """Natural log of a positive decimal given as a number or a string.

    Strings go through :class:`decimal.Decimal`, so ``"1e-40000"`` works.
    """
    try:
        d = Decimal(str(text))
    except InvalidOperation as exc:
        raise ConfigError(f"not a number: {text!r}") from exc
    if not d > 0:
        raise ConfigError(f"expected a positive number, got {text!r}")
    return float(d.ln())


def format_log(log_value: float) -> str:
    """``exp(log_value)`` in scientific notation, valid below float range."""
    l10 = log_value / math.log(10.0)
    e = math.floor(l10)
    m = 10 ** (l10 - e)
    if m >= 9.9999995:
        m, e = 1.0, e + 1
    return f"{m:.6f}e{e:+d}"


def parse_z_spec(spec) -> list:
    """Energy list as ``ln z`` values.

    Accepts a list of numbers or strings, ``"log:A:B:N"`` (N points uniform in
    ``ln z``) or ``"dlog:A:B:N"`` (uniform in ``L = ln|ln z^2|``).
    """
    if isinstance(spec, list):
        return [parse_log(v) for v in spec]
    if not isinstance(spec, str):
        raise ConfigError("z must be a list or a range string")
    parts = spec.split(":")
    if len(parts) != 4 or parts[0] not in ("log", "dlog"):
        raise ConfigError(f"bad z range {spec!r}; expected log:A:B:N or dlog:A:B:N")
    a, b = parse_log(parts[1]), parse_log(parts[2])
    try:
        n = int(parts[3])
    except ValueError as exc:
        raise ConfigError(f"bad point count in {spec!r}") from exc
    if n < 1:
        raise ConfigError("z range needs at least one point")
    if parts[0] == "log":
        return [float(v) for v in np.linspace(a, b, n)]
    if a >= 0 or b >= 0:
        raise ConfigError("dlog range needs z < 1")
    L = np.linspace(math.log(-2 * a), math.log(-2 * b), n)
    out = [float(-0.5 * math.exp(v)) for v in L]
    out[0], out[-1] = a, b
    return out


DEFAULTS = {
    "potential": {"kind": "exponential", "alpha1": 3.8, "alpha2": 1.0, "coupling": 1.0,
                  "table_r": None, "table_v": None},
    "two_body": {"n": 800, "order": 8, "extent": 40.0, "mu_table": True},
    "grid": {"n": 600, "scheme": "loglog", "s_min_factor": 1e-3},
    "r_eps": 0.2,
    "z": "log:1e-10:1e-150:15",
    "a_list": [1.0, 2.0],
    "mode": "auto",
    "out": "out",
    "seed": 0,
}


@dataclass
class RunConfig:
    potential: dict
    two_body: dict
    grid: dict
    r_eps: float
    log_z: list
    a_list: list
    mode: str
    out: str
    seed: int
    raw: dict = field(default_factory=dict)

    @property
    def hash(self) -> str:
        # the output location does not change results
        blob = json.dumps({k: v for k, v in self.raw.items() if k != "out"},
                          sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def potential_model(self) -> PotentialModel:
        return PotentialModel.from_dict(self.potential)


def _line_of(text: str, key: str) -> Optional[int]:
    if not text:
        return None
    m = re.search(r'"%s"\s*:' % re.escape(key), text)
    return text.count("\n", 0, m.start()) + 1 if m else None


def _fail(text, key, msg):
    line = _line_of(text, key)
    where = f"line {line}: " if line else ""
    raise ConfigError(f"{where}{key}: {msg}")


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    """Read and validate a JSON config; missing keys take defaults."""
    text = ""
    user = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"line {exc.lineno}: invalid JSON ({exc.msg})") from exc
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
    if overrides:
        user = {**user, **overrides}
    unknown = set(user) - set(DEFAULTS)
    if unknown:
        _fail(text, sorted(unknown)[0], "unknown key")
    raw = json.loads(json.dumps(DEFAULTS))
    for k, v in user.items():
        if isinstance(raw[k], dict):
            if not isinstance(v, dict):
                _fail(text, k, "expected an object")
            extra = set(v) - set(raw[k])
            if extra:
                _fail(text, sorted(extra)[0], f"unknown key in {k}")
            raw[k].update(v)
        else:
            raw[k] = v

    try:
        r_eps = float(raw["r_eps"])
    except (TypeError, ValueError):
        _fail(text, "r_eps", "must be a number")
    if not 0 < r_eps < 0.25:
        _fail(text, "r_eps", f"must lie in (0, 0.25), got {r_eps}")
    try:
        log_z = parse_z_spec(raw["z"])
    except ConfigError as exc:
        _fail(text, "z", str(exc))
    if any(b >= a for a, b in zip(log_z, log_z[1:])):
        _fail(text, "z", "values must be strictly decreasing")
    if any(lz > math.log(r_eps) for lz in log_z):
        _fail(text, "z", "values must lie in (0, r_eps]")
    a_list = raw["a_list"]
    if not isinstance(a_list, list) or not a_list or any(
            not isinstance(a, (int, float)) or a <= 0 for a in a_list):
        _fail(text, "a_list", "must be a non-empty list of positive thresholds")
    if raw["mode"] not in ("auto", "numeric", "asymptotic"):
        _fail(text, "mode", "must be auto, numeric or asymptotic")
    g = raw["grid"]
    if g["scheme"] not in ("log", "loglog"):
        _fail(text, "scheme", "must be log or loglog")
    if not isinstance(g["n"], int) or g["n"] < 16:
        _fail(text, "n", "grid size must be an integer >= 16")
    if not 0 < float(g["s_min_factor"]) <= 1:
        _fail(text, "s_min_factor", "must lie in (0, 1]")
    tb = raw["two_body"]
    if not isinstance(tb["n"], int) or tb["n"] < 16:
        _fail(text, "n", "two_body.n must be an integer >= 16")
    if not isinstance(raw["seed"], int):
        _fail(text, "seed", "must be an integer")
    try:
        PotentialModel.from_dict(raw["potential"])
    except (InvalidArgument, TypeError, ValueError) as exc:
        _fail(text, "potential", str(exc))
    return RunConfig(raw["potential"], tb, g, r_eps, log_z, [float(a) for a in a_list],
                     raw["mode"], str(raw["out"]), int(raw["seed"]), raw)


# --------------------------------------------------------------------------
# pipeline helpers
# --------------------------------------------------------------------------

def _dump_json(obj, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _write_csv(rows, header, path: Path):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(r)


def _fmt(x) -> str:
    return repr(float(x))


def _tune(cfg: RunConfig) -> two_body.TwoBodySolution:
    pot = cfg.potential_model()
    grid = two_body.two_body_grid(pot, cfg.two_body["n"], cfg.two_body["order"],
                                  cfg.two_body["extent"])
    sol = two_body.tune_resonance(pot, grid, fit_slope=True)
    if cfg.two_body.get("mu_table", True):
        two_body.build_mu_table(sol, 1e-6, max(0.4, math.sqrt(2) * cfg.r_eps))
    return sol


def _load_solution(path) -> two_body.TwoBodySolution:
    if path is None or not Path(path).is_file():
        raise FileNotFoundError(f"solution file not found: {path}")
    return two_body.load_solution(path)


def _spec(cfg, sol, log_z):
    return two_body.make_weight_spec(sol, LogScalar.from_log(log_z), cfg.r_eps, cfg.mode)


def _grid(cfg, spec):
    g = cfg.grid
    return three_body.operator_grid(spec, g["n"], g["scheme"], 1, float(g["s_min_factor"]))


def _operator(label, sol, spec, grid):
    if label == "scriptT":
        return three_body.script_t_matrix(spec, grid)
    if label == "Tplus":
        return three_body.t_pm_matrix(sol, spec, grid, +1)
    if label == "Tminus":
        return three_body.t_pm_matrix(sol, spec, grid, -1)
    if label == "Ta":
        return three_body.t_a_matrix(sol, spec, grid)
    return three_body.remainder_ops(sol, spec, grid)[label]


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_tune(cfg: RunConfig, out: Path) -> int:
    sol = _tune(cfg)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "solution.json"
    two_body.save_solution(sol, path)
    a = sol.slope_fit
    target = 0.5 * math.pi * sol.c0_squared
    print(f"lambda* = {sol.lambda_star:.12g}")
    print(f"c0^2    = {sol.c0_squared:.12g}")
    print(f"mu(0)   = {sol.mu0:.15g}")
    print(f"z^2 ln z slope = {a:.8g}  vs (pi/2) c0^2 = {target:.8g}  "
          f"(ratio {a / target:.5f})")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_spectrum(cfg: RunConfig, sol, label: str, out: Path, k_max: int = 20) -> int:
    rows = []
    for lz in cfg.log_z:
        spec = _spec(cfg, sol, lz)
        grid = _grid(cfg, spec)
        op = _operator(label, sol, spec, grid)
        vals = op.eigenvalues() if label in three_body.SELF_ADJOINT else op.singular_values()
        ref_xi = two_body.xi(spec, cfg.r_eps) if label == "scriptT" else None
        for k, v in enumerate(vals[:k_max], start=1):
            ref = "" if ref_xi is None else _fmt(ref_xi / (0.5 * math.pi + math.pi * (k - 1)))
            rows.append([label, format_log(lz), _fmt(lz / math.log(10)), _fmt(cfg.r_eps),
                         len(grid), k, _fmt(v), ref])
    path = out / f"spectrum_{label}.csv"
    _write_csv(rows, ["label", "z", "log10_z", "r_eps", "n", "k", "lambda_k",
                      "reference_closed_form"], path)
    print(f"wrote {path} ({len(rows)} rows, config {cfg.hash})")
    return EXIT_OK


def count_scan(cfg: RunConfig, sol) -> tuple:
    """Per-z counts for T+, T-, their sum and the closed-form model operator."""
    scale = 2.0 * math.pi * sol.c0_squared / 3.0
    rows = []
    per_label = {}
    for lz in cfg.log_z:
        spec = _spec(cfg, sol, lz)
        grid = _grid(cfg, spec)
        ev_p = three_body.t_pm_matrix(sol, spec, grid, +1).eigenvalues()
        ev_m = three_body.t_pm_matrix(sol, spec, grid, -1).eigenvalues()
        x = two_body.xi(spec, cfg.r_eps)
        L = counting.double_log(log_z=lz)
        for a in cfg.a_list:
            c = {
                "Tplus": counting.count_above(ev_p, a),
                "Tminus": counting.count_above(ev_m, a),
                "scriptT": counting.closed_form_count(x, a),
                "scaled_scriptT": counting.closed_form_count(scale * x, a),
            }
            c["TplusTminus"] = c["Tplus"] + c["Tminus"]
            for lab, v in c.items():
                rows.append([format_log(lz), _fmt(L), v, _fmt(a), lab])
                per_label.setdefault((lab, a), []).append(v)
    return rows, per_label


def targets(c0_squared: float, a: float) -> dict:
    return {
        "TplusTminus": 8.0 / (3.0 * math.pi * a),
        "Tplus": 4.0 / (3.0 * math.pi * a),
        "Tminus": 4.0 / (3.0 * math.pi * a),
        "scaled_scriptT": 4.0 / (3.0 * math.pi * a),
        "scriptT": 2.0 / (math.pi**2 * c0_squared * a),
    }


def cmd_count_scan(cfg: RunConfig, sol, out: Path) -> int:
    if len(set(cfg.log_z)) < 5:
        print(f"insufficient data: {len(cfg.log_z)} z points, need 5", file=sys.stderr)
        return EXIT_DATA
    rows, per_label = count_scan(cfg, sol)
    _write_csv(rows, ["z", "L", "count", "a", "label"], out / "count_scan.csv")
    fits = {}
    for (lab, a), counts in sorted(per_label.items()):
        tgt = targets(sol.c0_squared, a)[lab]
        entry = {}
        for method in ("auto", "raw"):
            scan = counting.CountingScan(cfg.log_z, a, counts, lab, tgt)
            try:
                entry[method] = counting.double_log_fit(scan, method)
            except counting.InsufficientData as exc:
                entry[method] = {"error": str(exc)}
        fits[f"{lab}@a={a:g}"] = entry
    report = {"config_hash": cfg.hash, "note": PROXY_NOTE, "c0_squared": sol.c0_squared,
              "r_eps": cfg.r_eps, "z": [format_log(v) for v in cfg.log_z],
              "a_list": cfg.a_list, "fits": fits}
    _dump_json(report, out / "count_fit.json")
    for key, e in fits.items():
        f = e["auto"]
        if "slope" in f:
            print(f"{key:28s} slope {f['slope']:.4f} target {f['target']:.4f} "
                  f"gap {f['relative_gap']:.1%} ({f['method']})")
    print(f"wrote {out / 'count_scan.csv'} and {out / 'count_fit.json'} (config {cfg.hash})")
    return EXIT_OK


def suite_dnorm(cfg, sol=None) -> dict:
    val = three_body.d_norm_check(512)
    rng = np.random.default_rng(cfg.seed)
    worst = 0.0
    for _ in range(20):
        c = rng.standard_normal(6)
        f = lambda x, c=c: np.polynomial.polynomial.polyval(x, c) * np.exp(-c[0] ** 2 * x)
        lhs, rhs = three_body.w_transform_norms(f)
        worst = max(worst, abs(lhs - rhs) / lhs)
    checks = {
        "norm_le_pi_over_4": {"value": val, "bound": math.pi / 4 + 1e-3,
                              "passed": val <= math.pi / 4 + 1e-3},
        "norm_le_pi_over_2": {"value": val, "bound": math.pi / 2 + 1e-3,
                              "passed": val <= math.pi / 2 + 1e-3},
        "w_unitary": {"max_relative_error": worst, "passed": worst < 1e-10},
    }
    return checks


def suite_weyl(cfg, sol=None) -> dict:
    rep = counting.weyl_property_suite(1000, 20, cfg.seed)
    if rep["passed"]:
        del rep["witnesses"]
    return {"weyl": rep}


def _needs_solution(fn):
    fn.needs_solution = True
    return fn


@_needs_solution
def suite_remainders(cfg, sol) -> dict:
    pt = psi_transform(sol, r_eps=cfg.r_eps)
    out = {}
    for lz in cfg.log_z:
        spec = _spec(cfg, sol, lz)
        grid = _grid(cfg, spec)
        rem = three_body.remainder_ops(sol, spec, grid)
        hs1 = rem["B1"].hs_norm()
        bound = spec.delta**2 * pt.alpha_bound**4 * math.pi / 16 / abs(math.log(2 * cfg.r_eps))
        sv = rem["S"].singular_values()
        rank_ok = len(sv) < 4 or sv[3] <= 1e-10 * sv[0]
        out[format_log(lz)] = {
            "hs_B1_sq": hs1**2, "bound": bound, "hs_B2": rem["B2"].hs_norm(),
            "hs_B3": rem["B3"].hs_norm(), "S_singular": [float(v) for v in sv[:4]],
            "passed": bool(hs1**2 <= bound and rank_ok),
        }
    return out


@_needs_solution
def suite_envelope(cfg, sol) -> dict:
    out = {}
    for lz in cfg.log_z:
        spec = _spec(cfg, sol, lz)
        u = np.linspace(spec.log_floor, math.log(cfg.r_eps), 400)
        ln_w2 = np.logaddexp(2 * u, 2 * lz)
        h = np.exp(two_body.log_g2(spec, u) + ln_w2 + np.log(-ln_w2))
        ok = bool(np.all(h <= spec.delta * (1 + 1e-9)) and np.all(h >= spec.delta_prime * (1 - 1e-9)))
        out[format_log(lz)] = {"mode": spec.mode, "delta": spec.delta,
                               "delta_prime": spec.delta_prime, "min": float(h.min()),
                               "max": float(h.max()), "passed": ok}
    return out


SUITE_FUNCS = {"dnorm": suite_dnorm, "weyl": suite_weyl, "remainders": suite_remainders,
               "envelope": suite_envelope}


def cmd_validate(cfg: RunConfig, suite: str, out: Path, sol=None) -> int:
    fn = SUITE_FUNCS[suite]
    checks = fn(cfg, sol)
    passed = all(v.get("passed", True) for v in checks.values())
    report = {"suite": suite, "config_hash": cfg.hash, "seed": cfg.seed,
              "passed": passed, "checks": checks}
    _dump_json(report, out / f"validate_{suite}.json")
    for name, v in checks.items():
        print(f"{'PASS' if v.get('passed', True) else 'FAIL'}  {suite}:{name}")
    return EXIT_OK if passed else EXIT_FAIL


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="superefimov", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="output directory (overrides config)")
    common.add_argument("--seed", type=int, help="seed for randomized suites")
    sol_arg = argparse.ArgumentParser(add_help=False)
    sol_arg.add_argument("--solution", help="tuned two-body solution (JSON)")

    sub.add_parser("tune", parents=[common], help="tune the pair to resonance")
    sp = sub.add_parser("spectrum", parents=[common, sol_arg], help="eigenvalue table")
    sp.add_argument("--operator", required=True, help="|".join(OPERATOR_LABELS))
    sub.add_parser("count-scan", parents=[common, sol_arg], help="counting scan and fit")
    vp = sub.add_parser("validate", parents=[common, sol_arg], help="property suites")
    vp.add_argument("--suite", required=True, help="|".join(SUITES))
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out"] = args.out
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    t0 = time.perf_counter()
    try:
        if args.command == "tune":
            code = cmd_tune(cfg, out)
        elif args.command == "spectrum":
            if args.operator not in OPERATOR_LABELS:
                parser.error(f"unknown operator {args.operator!r}; choose from "
                             f"{', '.join(OPERATOR_LABELS)}")
            code = cmd_spectrum(cfg, _load_solution(args.solution), args.operator, out)
        elif args.command == "count-scan":
            code = cmd_count_scan(cfg, _load_solution(args.solution), out)
        else:
            if args.suite not in SUITES:
                parser.error(f"unknown suite {args.suite!r}; choose from {', '.join(SUITES)}")
            fn = SUITE_FUNCS[args.suite]
            sol = _load_solution(args.solution) if getattr(fn, "needs_solution", False) else None
            code = cmd_validate(cfg, args.suite, out, sol)
    except FileNotFoundError as exc:
        print(f"missing artifact: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except (InvalidArgument, ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"done in {time.perf_counter() - t0:.1f} s", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
