"""Command-line driver: reproducible experiments with JSON/CSV reports and figures.

Usage::

    radlab [--config PATH] [--seed U64] [--out DIR] [--check] [--jobs N]
           [--set BLOCK.KEY=JSON ...] COMMAND [command options]

Commands are ``covering``, ``norm``, ``decompose``, ``decay`` and
``classify``.  Each writes ``<command>.json`` to the output directory,
plus CSV curves and PNG figures where they apply.  Exit status: 0 when
every check passes (or checks are off), 2 when a check fails under
``--check``, 3 on a configuration error.
"""

from __future__ import annotations

import argparse
import copy
import datetime as _dt
import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigError, RadlabError

EXIT_OK, EXIT_ERROR, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2, 3

DEFAULTS = {
    "covering": {
        "n": 2, "j_max": 6, "k_max": 512, "density": 8,
        "cell_budget": 10_000_000, "plot_level": 0,
    },
    "norm": {
        "input": None, "kind": "morrey", "p": 2.0, "u": 2.0, "s": 1.0, "tau": 0.0,
        "q": 2.0, "m": 1, "j_max": None, "n": 2, "R": 2.0, "N": 256,
    },
    "decompose": {
        "count": 1, "n": 2, "R": 2.0, "N": 256, "j_max": 6, "k_max": 192,
        "s": 1.0, "p": 2.0, "q": 2.0, "tau": 0.0,
        "spread_tol": 1e-8, "reconstruction_tol": 0.05, "ratio_span": 50.0,
        "write_coefficients": True,
    },
    "decay": {
        "s": 1.0, "p": 2.0, "q": 2.0, "taus": ["0", "1/8", "1/4"],
        "radius_exponents": [2, 3, 4, 5, 6], "R": 256.0, "N": 1024, "tolerance": 0.15,
        "blowup_s": 0.4, "blowup_levels": [4, 5, 6, 7, 8, 9, 10, 11, 12], "blowup_margin": 0.05,
    },
    "classify": {
        "point": {"space": "B", "n": 2, "s": "1", "tau": "0", "p": "2", "q": "2"},
        "sweep": False,
    },
}


# ---------------------------------------------------------------------------
# configuration

def _is_int(v):
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v):
    return (_is_int(v) or isinstance(v, float)) and not (isinstance(v, float) and math.isnan(v))


def _exponent(v):
    """p, q, u: positive number or "inf"."""
    if v == "inf" or (isinstance(v, float) and math.isinf(v) and v > 0):
        return True
    return _is_num(v) and v > 0


def _rational_text(v):
    try:
        Fraction(str(v))
        return True
    except (ValueError, ZeroDivisionError):
        return False


_CHECKS = {
    "int>=0": (lambda v: _is_int(v) and v >= 0, "a nonnegative integer"),
    "int>=1": (lambda v: _is_int(v) and v >= 1, "a positive integer"),
    "int>=2": (lambda v: _is_int(v) and v >= 2, "an integer >= 2"),
    "int|null": (lambda v: v is None or (_is_int(v) and v >= 0), "a nonnegative integer or null"),
    "num": (_is_num, "a number"),
    "num>0": (lambda v: _is_num(v) and v > 0, "a positive number"),
    "num>=0": (lambda v: _is_num(v) and v >= 0, "a nonnegative number"),
    "exp": (_exponent, 'a positive number or "inf"'),
    "exp|null": (lambda v: v is None or _exponent(v), 'a positive number, "inf" or null'),
    "bool": (lambda v: isinstance(v, bool), "true or false"),
    "path|null": (lambda v: v is None or isinstance(v, str), "a path or null"),
    "kind": (lambda v: v in NORM_KINDS, "one of " + ", ".join(sorted(["lp", "morrey", "sobolev_morrey",
                                                                     "besov", "besov_type",
                                                                     "besov_morrey"]))),
    "rationals": (lambda v: isinstance(v, list) and len(v) > 0 and all(_rational_text(x) for x in v),
                  "a nonempty list of rationals"),
    "ints": (lambda v: isinstance(v, list) and len(v) > 0 and all(_is_int(x) for x in v),
             "a nonempty list of integers"),
    "point": (lambda v: isinstance(v, dict), "an object"),
}

NORM_KINDS = ("lp", "morrey", "sobolev_morrey", "besov", "besov_type", "besov_morrey")

SCHEMA = {
    "covering": {"n": "int>=2", "j_max": "int>=0", "k_max": "int>=1", "density": "int>=1",
                 "cell_budget": "int>=1", "plot_level": "int>=0"},
    "norm": {"input": "path|null", "kind": "kind", "p": "exp", "u": "exp|null", "s": "num",
             "tau": "num>=0", "q": "exp", "m": "int>=0", "j_max": "int|null", "n": "int>=2",
             "R": "num>0", "N": "int>=2"},
    "decompose": {"count": "int>=1", "n": "int>=2", "R": "num>0", "N": "int>=2",
                  "j_max": "int>=0", "k_max": "int>=1", "s": "num", "p": "exp", "q": "exp",
                  "tau": "num>=0", "spread_tol": "num>0", "reconstruction_tol": "num>0",
                  "ratio_span": "num>0", "write_coefficients": "bool"},
    "decay": {"s": "num", "p": "exp", "q": "exp", "taus": "rationals",
              "radius_exponents": "ints", "R": "num>0", "N": "int>=2", "tolerance": "num>0",
              "blowup_s": "num", "blowup_levels": "ints", "blowup_margin": "num"},
    "classify": {"point": "point", "sweep": "bool"},
}


def validate(command: str, block: dict) -> dict:
    """Merge a config block over the defaults and check every field."""
    if command not in DEFAULTS:
        raise ConfigError("command", f"unknown command {command!r}")
    if not isinstance(block, dict):
        raise ConfigError(command, "must be an object")
    out = copy.deepcopy(DEFAULTS[command])
    for key, val in block.items():
        if key not in SCHEMA[command]:
            raise ConfigError(f"{command}.{key}", "unknown field")
        out[key] = val
    for key, rule in SCHEMA[command].items():
        ok, what = _CHECKS[rule]
        if not ok(out[key]):
            raise ConfigError(f"{command}.{key}", f"must be {what}, got {out[key]!r}")
    if command == "norm" and out["kind"] in ("morrey", "sobolev_morrey", "besov_morrey"):
        if out["u"] is None:
            raise ConfigError("norm.u", "required for Morrey-type norms")
        if _num(out["u"]) < _num(out["p"]):
            raise ConfigError("norm.u", "must satisfy p <= u")
    if command == "decay" and len(out["radius_exponents"]) < 2:
        raise ConfigError("decay.radius_exponents", "need at least two radii")
    if command == "classify":
        from .regions import ParameterPoint
        try:
            ParameterPoint.from_dict(out["point"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError("classify.point", str(exc)) from None
    return out


def _num(v) -> float:
    return math.inf if v == "inf" else float(v)


def load_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    for key in cfg:
        if key not in DEFAULTS:
            raise ConfigError(key, "unknown command block")
    return cfg


def apply_overrides(cfg: dict, sets: list) -> dict:
    cfg = copy.deepcopy(cfg)
    for item in sets or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError("--set", f"expected BLOCK.KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        block, field = key.split(".", 1)
        if block not in DEFAULTS:
            raise ConfigError(key, "unknown command block")
        try:
            val = json.loads(raw)
        except json.JSONDecodeError:
            val = raw
        cfg.setdefault(block, {})[field] = val
    return cfg


# ---------------------------------------------------------------------------
# output helpers

def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        x = float(x)
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, Fraction):
        return str(x)
    return x


def write_report(out: Path, command: str, payload: dict) -> Path:
    payload = dict(payload)
    payload["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    path = out / f"{command}.json"
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def _point_from_cfg(d: dict):
    from .regions import ParameterPoint
    return ParameterPoint.from_dict(d)


# ---------------------------------------------------------------------------
# commands

def cmd_covering(cfg, ctx) -> dict:
    from .geometry import build_radial_covering, ring_count, verify_regular
    from .plotting import plot_covering
    t0 = time.perf_counter()
    cov = build_radial_covering(cfg["n"], cfg["j_max"], cfg["k_max"], cfg["cell_budget"])
    rep = verify_regular(cov, density=cfg["density"])
    checks = {"regular": bool(rep["pass"])}
    if cfg["n"] == 2:
        checks["ring_count_2k+1"] = all(ring_count(2, k) == 2 * k + 1
                                        for k in range(cfg["k_max"] + 1))
    elapsed = time.perf_counter() - t0
    figs = [plot_covering(cov, min(cfg["plot_level"], cfg["j_max"]), ctx["out"] / "covering.png")]
    # wall-clock figures live outside "results" so that results stay reproducible
    return {"results": {"verify": rep, "cells": cov.cell_count()},
            "timing": {"build_and_verify_s": round(elapsed, 1)},
            "checks": checks, "artifacts": [Path(f).name for f in figs]}


def _exp_arg(v):
    return math.inf if v == "inf" else float(v)


def cmd_norm(cfg, ctx) -> dict:
    from . import norms
    from .lp import read_gfn, write_gfn
    from .testfunctions import random_bandlimited
    if cfg["input"]:
        try:
            f = read_gfn(cfg["input"])
        except OSError as exc:
            raise ConfigError("norm.input", f"cannot read {cfg['input']}: {exc.strerror}") from None
        source = str(cfg["input"])
    else:
        rng = np.random.default_rng(ctx["seed"])
        f = random_bandlimited(cfg["n"], cfg["R"], cfg["N"], rng)
        write_gfn(ctx["out"] / "input.gfn", f)
        source = "input.gfn"
    kind = "lp" if ctx.get("lp") else cfg["kind"]
    p, q = _exp_arg(cfg["p"]), _exp_arg(cfg["q"])
    u = None if cfg["u"] is None else _exp_arg(cfg["u"])
    if kind == "lp":
        res = norms.NormResult(f.lp_norm(p), {"kind": "domain"})
    elif kind == "morrey":
        res = norms.morrey_norm(f, p, u)
    elif kind == "sobolev_morrey":
        res = norms.sobolev_morrey_norm(f, cfg["m"], p, u)
    elif kind == "besov":
        res = norms.besov_norm(f, cfg["s"], p, q, j_max=cfg["j_max"])
    elif kind == "besov_type":
        res = norms.besov_type_norm(f, cfg["s"], cfg["tau"], p, q, j_max=cfg["j_max"])
    else:
        res = norms.besov_morrey_norm(f, cfg["s"], u, p, q, j_max=cfg["j_max"])
    print(json.dumps({"kind": kind, "value": res.value}))
    return {"results": {"kind": kind, "input": source, "norm": res.to_dict()},
            "checks": {"finite": math.isfinite(res.value)}, "artifacts": []}


def cmd_decompose(cfg, ctx) -> dict:
    from .atoms import (AtomParams, extract_atoms, extract_coefficients, radial_sequence_norm,
                        reconstruct, ring_spread, stencil_coefficients)
    from .geometry import build_radial_covering
    from .lp import sample_radial
    from .norms import CubeFamily, besov_type_norm
    from .plotting import plot_reconstruction
    from .testfunctions import random_radial_profile
    n, p, q = cfg["n"], _exp_arg(cfg["p"]), _exp_arg(cfg["q"])
    rng = np.random.default_rng(ctx["seed"])
    cov = build_radial_covering(n, cfg["j_max"], cfg["k_max"])
    params = AtomParams.for_decomposition(n, cfg["s"], p, cfg["tau"])
    rows, errors, artifacts = [], {}, []
    for i in range(cfg["count"]):
        prof = random_radial_profile(n, cfg["R"], cfg["N"], rng)
        f = sample_radial(prof, cfg["R"], cfg["N"])
        t = extract_coefficients(f, cov, None, params)
        spread = ring_spread(stencil_coefficients(f, cov, None, params))
        atoms = extract_atoms(f, cov, None, params, coeffs=t)
        fn = f.lp_norm(2)
        errs = {J: (reconstruct(t, atoms, J) - f).lp_norm(2) / fn for J in range(cfg["j_max"] + 1)}
        cubes = CubeFamily.for_grid(f)
        seq = (radial_sequence_norm if t.form == "radial" else _general_seq)(
            t, p, q, cfg["tau"], cov, cubes).value
        bt = besov_type_norm(f, cfg["s"], cfg["tau"], p, q, None, cubes, cfg["j_max"]).value
        errors[f"input {i}"] = {str(J): e for J, e in errs.items()}
        rows.append({"input": i, "form": t.form, "ring_spread": spread,
                     "reconstruction_error": {str(J): e for J, e in errs.items()},
                     "sequence_norm": seq, "besov_type_norm": bt, "ratio": seq / bt,
                     "symmetry_deviation": t.meta.get("symmetry_deviation")})
        if cfg["write_coefficients"]:
            (ctx["out"] / f"coefficients_{i}.json").write_text(t.to_json())
            (ctx["out"] / f"coefficients_{i}.csv").write_text(t.to_csv())
            artifacts += [f"coefficients_{i}.json", f"coefficients_{i}.csv"]
    artifacts.append(Path(plot_reconstruction(errors, ctx["out"] / "reconstruction.png")).name)
    ratios = [r["ratio"] for r in rows]
    top = str(cfg["j_max"])
    checks = {
        "ring_spread": all(r["ring_spread"] <= cfg["spread_tol"] for r in rows),
        "reconstruction": all(r["reconstruction_error"][top] <= cfg["reconstruction_tol"] for r in rows),
        "monotone_in_J": all(all(np.diff([r["reconstruction_error"][str(J)]
                                          for J in range(cfg["j_max"] + 1)]) <= 1e-12) for r in rows),
        "ratio_span": max(ratios) / min(ratios) <= cfg["ratio_span"],
    }
    return {"results": {"inputs": rows, "ratio_min": min(ratios), "ratio_max": max(ratios)},
            "checks": checks, "artifacts": artifacts}


def _general_seq(t, p, q, tau, cov, cubes):
    from .atoms import sequence_norm
    return sequence_norm(t, p, q, tau, cov, cubes)


def cmd_decay(cfg, ctx) -> dict:
    from .plotting import plot_blowup, plot_decay
    from .radial import blowup_experiment, decay_experiment, write_decay_csv
    import csv
    exp = decay_experiment(2, cfg["s"], _exp_arg(cfg["p"]), _exp_arg(cfg["q"]),
                           [Fraction(str(t)) for t in cfg["taus"]], cfg["radius_exponents"],
                           cfg["R"], cfg["N"])
    artifacts, checks = [], {}
    summary = ctx["out"] / "decay_slopes.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tau", "predicted_exponent", "fitted_slope", "residual", "pass"])
        for i, row in enumerate(exp.rows):
            e = None if row["predicted"] is None else float(Fraction(row["predicted"]))
            ok = e is not None and abs(row["slope"] - e) <= cfg["tolerance"]
            row["pass"] = ok
            checks[f"slope tau={row['tau']}"] = ok
            w.writerow([row["tau"], row["predicted"], repr(row["slope"]), repr(row["residual"]), ok])
            r = np.asarray(row["radii"])
            v = np.asarray(row["values"])
            if e is not None:
                c = float(np.mean(np.log2(v) - e * np.log2(r)))
                pred = 2.0 ** c * r ** e
            else:
                pred = np.full_like(r, np.nan)
            name = f"decay_{i}.csv"
            write_decay_csv(ctx["out"] / name, r, v, pred)
            artifacts.append(name)
    artifacts.append(summary.name)
    artifacts.append(Path(plot_decay(exp.rows, ctx["out"] / "decay.png")).name)
    bl = blowup_experiment(cfg["blowup_s"], _exp_arg(cfg["q"]), 2, cfg["blowup_levels"])
    checks["blowup_monotone"] = bool(np.all(np.diff(bl.values) >= 0))
    checks["blowup_slope"] = bl.slope >= bl.predicted - cfg["blowup_margin"]
    artifacts.append(Path(plot_blowup(bl.levels, bl.values, ctx["out"] / "blowup.png")).name)
    return {"results": {"decay": exp.to_dict(), "blowup": bl.to_dict()},
            "checks": checks, "artifacts": artifacts}


def cmd_classify(cfg, ctx) -> dict:
    from .regions import classify, consistency_violations, markdown_table, sweep_points
    pp = _point_from_cfg(cfg["point"])
    rep = classify(pp)
    bad = consistency_violations(rep)
    out = {"results": {"report": rep.to_dict()}, "checks": {"consistent": not bad},
           "artifacts": []}
    print(json.dumps(_jsonable(rep.to_dict()), sort_keys=True))
    if cfg["sweep"] or ctx.get("sweep"):
        pts = list(sweep_points())
        (ctx["out"] / "classify_sweep.md").write_text(markdown_table(pts))
        n_bad = sum(1 for p in pts if consistency_violations(classify(p)))
        out["results"]["sweep_points"] = len(pts)
        out["results"]["sweep_violations"] = n_bad
        out["checks"]["sweep_consistent"] = n_bad == 0
        out["artifacts"].append("classify_sweep.md")
    return out


COMMANDS = {"covering": cmd_covering, "norm": cmd_norm, "decompose": cmd_decompose,
            "decay": cmd_decay, "classify": cmd_classify}


# ---------------------------------------------------------------------------
# entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--config", metavar="PATH", default=argparse.SUPPRESS,
                        help="JSON file with one block per command")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="seed for all randomized inputs (default 0)")
    common.add_argument("--out", metavar="DIR", default=argparse.SUPPRESS,
                        help="output directory (default radlab-out)")
    common.add_argument("--check", action="store_true", default=argparse.SUPPRESS,
                        help="exit with status 2 if any check fails")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS,
                        help="FFT worker threads")
    common.add_argument("--set", action="append", metavar="BLOCK.KEY=JSON",
                        default=argparse.SUPPRESS, help="override one config field")
    ap = argparse.ArgumentParser(prog="radlab", parents=[common], allow_abbrev=False,
                                 description="Radial function-space laboratory.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("covering", parents=[common], allow_abbrev=False, help="build and verify the radial covering")
    pn = sub.add_parser("norm", parents=[common], allow_abbrev=False, help="norm of a GFN1 grid function")
    pn.add_argument("input", nargs="?", help="GFN1 file (random input when omitted)")
    pn.add_argument("--kind", choices=NORM_KINDS)
    pn.add_argument("--lp", action="store_true", help="plain L^p norm")
    for name in ("p", "u", "q"):
        pn.add_argument(f"--{name}")
    for name in ("s", "tau"):
        pn.add_argument(f"--{name}", type=float)
    pn.add_argument("--m", type=int)
    sub.add_parser("decompose", parents=[common], allow_abbrev=False, help="atomic decomposition of radial inputs")
    sub.add_parser("decay", parents=[common], allow_abbrev=False, help="witness decay and blow-up slopes")
    pc = sub.add_parser("classify", parents=[common], allow_abbrev=False, help="region report for a parameter point")
    pc.add_argument("--sweep", action="store_true", help="also write a Markdown sweep table")
    for name in ("space", "s", "tau", "p", "q", "u"):
        pc.add_argument(f"--{name}")
    pc.add_argument("--n", type=int)
    pc.add_argument("--m", type=int)
    return ap


def _norm_flags(args, block):
    if getattr(args, "input", None):
        block["input"] = args.input
    if getattr(args, "kind", None):
        block["kind"] = args.kind
    for name in ("p", "u", "q"):
        v = getattr(args, name, None)
        if v is not None:
            block[name] = "inf" if v == "inf" else float(v)
    for name in ("s", "tau", "m"):
        v = getattr(args, name, None)
        if v is not None:
            block[name] = v


def _classify_flags(args, block):
    point = dict(block.get("point", DEFAULTS["classify"]["point"]))
    given = {k: getattr(args, k, None) for k in ("space", "n", "s", "tau", "p", "q", "u", "m")}
    if any(v is not None for v in given.values()):
        point.update({k: v for k, v in given.items() if v is not None})
        block["point"] = point


def run(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    opt = vars(args)
    try:
        cfg_all = apply_overrides(load_config(opt.get("config")), opt.get("set"))
        block = dict(cfg_all.get(args.command, {}))
        if args.command == "norm":
            _norm_flags(args, block)
        elif args.command == "classify":
            _classify_flags(args, block)
        cfg = validate(args.command, block)
        seed = opt.get("seed", 0)
        if seed < 0 or seed >= 2 ** 64:
            raise ConfigError("--seed", "must be an unsigned 64-bit integer")
        jobs = opt.get("jobs", 1)
        if jobs < 1:
            raise ConfigError("--jobs", "must be >= 1")
        out = Path(opt.get("out", "radlab-out"))
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ConfigError("--out", f"cannot create {out}: {exc.strerror}") from None
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    from .lp import set_workers
    set_workers(jobs)
    ctx = {"out": out, "seed": seed, "lp": opt.get("lp", False), "sweep": opt.get("sweep", False)}
    try:
        res = COMMANDS[args.command](cfg, ctx)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RadlabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    passed = all(res["checks"].values())
    payload = {"command": args.command, "config": cfg, "seed": seed, "pass": passed, **res}
    path = write_report(out, args.command, payload)
    for name, ok in res["checks"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}", file=sys.stderr)
    print(f"report: {path}", file=sys.stderr)
    if opt.get("check", False) and not passed:
        return EXIT_CHECK
    return EXIT_OK


def main() -> None:
    sys.exit(run())
