"""Command-line front end: ``cknlab verify|constants|stability|bessel|plotdata``.

Exit codes: 0 success, 1 a residual exceeded tolerance, 2 bad config or
inputs that fail integrability / regime checks.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import jsonschema
import numpy as np

from .bessel import default_grid, derive_W, solve_pbessel
from .domain import CknParams, classify_regime, profile_from_json, weight_from_json
from .errors import CknlabError, IntegrabilityError, PositivityError, RegimeError
from .identities import DEFAULT_TOL, default_suite, run_entry
from .stability import default_grid as stability_default_grid
from .stability import refined_grid, stability_scan, worker_count

SCHEMA_VERSION = "cknlab/1"

_NUM = {"type": "number"}
_PARAMS = {
    "type": "object",
    "properties": {"N": _NUM, "p": _NUM, "a": _NUM, "b": _NUM},
    "required": ["N", "p", "a", "b"],
    "additionalProperties": False,
}
_FAMILY = {"type": "object", "properties": {"family": {"type": "string"}}, "required": ["family"]}
_ENTRY = {
    "oneOf": [
        {"type": "object", "additionalProperties": False, "required": ["kind", "params", "family"],
         "properties": {"kind": {"const": "ckn"}, "params": _PARAMS, "family": _FAMILY}},
        {"type": "object", "additionalProperties": False, "required": ["kind", "pair", "family"],
         "properties": {"kind": {"const": "bessel"}, "pair": {"type": "object"}, "family": _FAMILY}},
        {"type": "object", "additionalProperties": False, "required": ["kind", "N", "P", "p", "family"],
         "properties": {"kind": {"const": "monomial"}, "N": {"type": "integer", "minimum": 1},
                        "P": {"type": "array", "items": _NUM}, "p": _NUM, "family": _FAMILY}},
        {"type": "object", "additionalProperties": False, "required": ["kind", "p", "family"],
         "properties": {"kind": {"const": "nonradial"}, "p": _NUM, "eps": _NUM, "k": {"type": "integer"},
                        "alpha": _NUM, "family": _FAMILY}},
    ]
}
_SAMPLE = {
    "type": "object", "additionalProperties": False,
    "required": ["eps", "bump_lo", "bump_hi", "lambda0"],
    "properties": {"eps": _NUM, "bump_lo": _NUM, "bump_hi": _NUM, "lambda0": _NUM},
}
VERIFY_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "command", "suite"],
    "properties": {
        "schema": {"type": "string"},
        "command": {"const": "verify"},
        "suite": {"oneOf": [{"const": "default"}, {"type": "array", "items": _ENTRY, "minItems": 1}]},
        "tol": {"type": "number", "exclusiveMinimum": 0},
        "out": {"type": "string"},
        "threads": {"type": "integer", "minimum": 1},
    },
}
STABILITY_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["schema", "command", "params"],
    "properties": {
        "schema": {"type": "string"},
        "command": {"const": "stability"},
        "params": _PARAMS,
        "model": {"enum": ["plain_exp", "power_exp"]},
        "grid": {"oneOf": [{"enum": ["default", "refined"]},
                           {"type": "array", "items": _SAMPLE, "minItems": 1}]},
        "exploratory": {"type": "boolean"},
        "threads": {"type": "integer", "minimum": 1},
    },
}


class ConfigError(CknlabError):
    pass


def _clean(x):
    """JSON-safe copy: non-finite floats become strings, numpy scalars become Python."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        x = x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")
    return x


def dumps(obj) -> str:
    # repr-based float formatting is the shortest round-trip decimal
    return json.dumps(_clean(obj), indent=1, allow_nan=False) + "\n"


def load_config(path, schema) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {cfg.get('schema')!r}; expected {SCHEMA_VERSION!r}")
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"invalid config: {exc.message}") from exc
    return cfg


def _threads(cfg: dict) -> int:
    return worker_count(int(cfg.get("threads", 1)))


def _err(msg: str) -> None:
    print(f"cknlab: {msg}", file=sys.stderr)


# ------------------------------------------------------------------ verify --

def _run_one(job):
    idx, entry, tol = job
    try:
        reports = [r.to_json() for r in run_entry(entry, tol)]
        return idx, reports, None
    except (IntegrabilityError, RegimeError, PositivityError, ValueError, KeyError) as exc:
        return idx, [], f"{type(exc).__name__}: {exc}"


def _precheck(entries) -> None:
    for i, e in enumerate(entries):
        if e["kind"] != "ckn":
            continue
        try:
            params = CknParams.from_json(e["params"])
        except (ValueError, KeyError) as exc:
            raise ConfigError(f"entry {i}: {exc}") from exc
        if params.gap == 0:
            raise ConfigError(f"entry {i}: DEGENERATE parameters, b + 1 - a = 0 "
                              f"(N={params.N}, p={params.p}, a={params.a}, b={params.b})")


def cmd_verify(config_path, tol_override=None, out_path=None) -> int:
    try:
        cfg = load_config(config_path, VERIFY_SCHEMA)
        entries = default_suite() if cfg["suite"] == "default" else cfg["suite"]
        _precheck(entries)
    except ConfigError as exc:
        _err(str(exc))
        return 2
    tol = float(tol_override) if tol_override is not None else float(cfg.get("tol", DEFAULT_TOL))
    out_path = out_path or cfg.get("out")
    jobs = [(i, e, tol) for i, e in enumerate(entries)]
    workers = _threads(cfg)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            done = list(ex.map(_run_one, jobs, chunksize=1))
    else:
        done = [_run_one(j) for j in jobs]
    done.sort(key=lambda t: t[0])

    results, errors = [], []
    for idx, reports, error in done:
        for r in reports:
            r["entry"] = idx
            results.append(r)
        if error:
            errors.append({"entry": idx, "error": error})
    n_pass = sum(r["status"] == "pass" for r in results)
    n_fail = sum(r["status"] == "fail" for r in results)
    n_skip = len(results) - n_pass - n_fail
    if errors or n_skip:
        code = 2
    elif n_fail:
        code = 1
    else:
        code = 0
    report = {"schema": SCHEMA_VERSION, "command": "verify", "tol": tol,
              "summary": {"entries": len(entries), "reports": len(results), "passed": n_pass,
                          "failed": n_fail, "skipped": n_skip, "errors": len(errors)},
              "exit_code": code, "errors": errors, "results": results}
    text = dumps(report)
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    for e in errors:
        _err(f"entry {e['entry']}: {e['error']}")
    for r in results:
        if r["status"] == "fail":
            _err(f"entry {r['entry']} {r['identity_id']}: residual_rel={r['residual_rel']!r} > tol={tol!r}")
        elif r["status"] != "pass":
            _err(f"entry {r['entry']} {r['identity_id']}: {r['status']}")
    print(f"passed {n_pass}/{len(results)}", file=sys.stderr)
    return code


# --------------------------------------------------------------- constants --

def cmd_constants(N, p, a, b, fmt="text", stream=None) -> int:
    stream = stream or sys.stdout
    try:
        params = CknParams(N, p, a, b)
    except (ValueError, RegimeError) as exc:
        _err(str(exc))
        return 2
    reg = classify_regime(params)
    if fmt == "json":
        stream.write(dumps({"params": params.to_json(), "gap": params.gap, **reg.to_json()}))
    elif reg.tag == "DEGENERATE":
        reason = "b + 1 - a = 0" if params.gap == 0 else "constant vanishes"
        stream.write(f"regime DEGENERATE ({reason}), constant {reg.sharp_constant!r}, no extremizer\n")
    else:
        kind = reg.extremizer_kind or "unknown"
        stream.write(f"regime {reg.tag}, constant {reg.sharp_constant!r}, extremizer {kind}\n")
    return 0


# --------------------------------------------------------------- stability --

def cmd_stability(config_path, out_csv) -> int:
    try:
        cfg = load_config(config_path, STABILITY_SCHEMA)
        params = CknParams.from_json(cfg["params"])
    except (ConfigError, ValueError) as exc:
        _err(str(exc))
        return 2
    grid = cfg.get("grid", "default")
    if grid == "default":
        grid = stability_default_grid()
    elif grid == "refined":
        grid = refined_grid()
    try:
        res = stability_scan(params, grid, cfg.get("model", "plain_exp"),
                             bool(cfg.get("exploratory", False)), _threads(cfg))
    except (RegimeError, IntegrabilityError) as exc:
        _err(str(exc))
        return 2
    except CknlabError as exc:
        _err(str(exc))
        return 1
    Path(out_csv).write_text(res.csv_text(), encoding="utf-8")
    print(f"empirical_C={res.min_ratio!r}")
    bad = [r for r in res.rows if r["status"].startswith("error")]
    return 1 if bad else 0


# ------------------------------------------------------------------ bessel --

def _json_arg(text: str):
    text = text.strip()
    if text.startswith("{"):
        return json.loads(text)
    with open(text, encoding="utf-8") as fh:
        return json.load(fh)


def cmd_bessel(mode, V, phi=None, W=None, n_eff=None, p=None, r0=1e-3, R=math.inf, out=None) -> int:
    try:
        Vw = weight_from_json(_json_arg(V))
        if mode == "derive":
            if phi is None:
                raise ConfigError("derive needs --phi")
            prof = profile_from_json(_json_arg(phi))
            Ws = derive_W(Vw, prof, p, n_eff)
            grid = default_grid()
            doc = {"weight": "tabulated", "r": grid.tolist(), "w": np.asarray(Ws(grid), float).tolist()}
            if Ws.kind != "tabulated":
                doc["closed_form"] = Ws.to_json()
        elif mode == "solve":
            if W is None:
                raise ConfigError("solve needs --W")
            Ws = weight_from_json(_json_arg(W))
            shot = solve_pbessel(Vw, Ws, p, n_eff, r0=r0, R=R)
            lo, hi = shot.certified_interval
            rr = np.geomspace(lo, hi, 256)
            doc = {"r": rr.tolist(), "phi": np.asarray(shot.profile(rr), float).tolist(),
                   "positive": bool(shot.positive), "certified_interval": [lo, hi],
                   "zero": shot.zero, "steps": shot.steps}
        else:
            raise ConfigError(f"unknown bessel mode {mode!r}")
    except (ConfigError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        _err(str(exc))
        return 2
    except (PositivityError, RegimeError) as exc:
        _err(str(exc))
        return 2
    text = dumps(doc)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------- plotdata --

def cmd_plotdata(in_path, kind, out=None) -> int:
    try:
        if kind == "residuals":
            doc = json.loads(Path(in_path).read_text(encoding="utf-8"))
            header = ["index", "identity_id", "residual_rel"]
            rows = [[i, r["identity_id"], r["residual_rel"]] for i, r in enumerate(doc["results"])]
        elif kind == "ratio_landscape":
            with open(in_path, newline="", encoding="utf-8") as fh:
                data = list(csv.DictReader(fh))
            header = ["eps", "lambda0", "bump_lo", "bump_hi", "ratio"]
            rows = [[d[k] for k in header] for d in data]
        elif kind == "profile":
            doc = json.loads(Path(in_path).read_text(encoding="utf-8"))
            header = ["r", "phi"]
            rows = [[repr(float(x)), repr(float(y))] for x, y in zip(doc["r"], doc["phi"])]
        else:
            raise ConfigError(f"unknown plot kind {kind!r}")
    except (ConfigError, OSError, KeyError, ValueError) as exc:
        _err(str(exc))
        return 2
    fh = open(out, "w", newline="", encoding="utf-8") if out else sys.stdout
    try:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        wr.writerows(rows)
    finally:
        if out:
            fh.close()
    return 0


# -------------------------------------------------------------------- main --

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cknlab", description="Numerical checks for weighted Hardy/CKN identities.")
    sub = ap.add_subparsers(dest="cmd", required=True)

    v = sub.add_parser("verify", help="run an identity suite")
    v.add_argument("--config", required=True)
    v.add_argument("--tol", type=float)
    v.add_argument("--out")

    c = sub.add_parser("constants", help="regime and sharp constant for (N, p, a, b)")
    c.add_argument("--N", type=int, required=True)
    c.add_argument("--p", type=float, required=True)
    c.add_argument("--a", type=float, required=True)
    c.add_argument("--b", type=float, required=True)
    c.add_argument("--format", choices=["json", "text"], default="text")

    s = sub.add_parser("stability", help="stability-ratio scan")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)

    b = sub.add_parser("bessel", help="derive W or shoot phi for a Bessel pair")
    b.add_argument("mode", choices=["derive", "solve"])
    b.add_argument("--V", required=True, help="weight JSON (inline or file path)")
    grp = b.add_mutually_exclusive_group(required=True)
    grp.add_argument("--phi", help="profile JSON (derive)")
    grp.add_argument("--W", help="weight JSON (solve)")
    b.add_argument("--Neff", type=float, required=True)
    b.add_argument("--p", type=float, required=True)
    b.add_argument("--r0", type=float, default=1e-3)
    b.add_argument("--R", type=float, default=math.inf)
    b.add_argument("--out")

    d = sub.add_parser("plotdata", help="x,y columns from a report or CSV")
    d.add_argument("--in", dest="in_path", required=True)
    d.add_argument("--kind", choices=["residuals", "ratio_landscape", "profile"], required=True)
    d.add_argument("--out")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.cmd == "verify":
        return cmd_verify(args.config, args.tol, args.out)
    if args.cmd == "constants":
        return cmd_constants(args.N, args.p, args.a, args.b, args.format)
    if args.cmd == "stability":
        return cmd_stability(args.config, args.out)
    if args.cmd == "bessel":
        return cmd_bessel(args.mode, args.V, args.phi, args.W, args.Neff, args.p, args.r0, args.R, args.out)
    return cmd_plotdata(args.in_path, args.kind, args.out)


if __name__ == "__main__":
    sys.exit(main())
