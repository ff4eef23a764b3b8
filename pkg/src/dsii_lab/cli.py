"""Command-line entry point: ``dsii-lab <subcommand> [--config FILE] [key=value ...]``."""
from __future__ import annotations

import argparse
import ast
import csv
import io
import json
import logging
import math
import operator
import os
import platform
import sys
from dataclasses import dataclass, fields, replace

import numpy as np

from . import __version__
from . import darboux as dx
from . import evolve as ev
from . import melnikov as mk
from . import model as md
from . import normalform as nf
from .errors import DSIIError
from .spectral import TorusGrid, atomic_write, snapshot_text

log = logging.getLogger("dsii_lab")

SUBCOMMANDS = ("verify", "spectrum", "orbit", "melnikov", "solve-params", "scan-domain",
               "simulate", "normalform")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # physical parameters
    omega: float = math.sqrt(2) / 2 + 0.11
    alpha: float = 5.645
    beta: float = 11.336
    epsilon: float = 0.0
    kappa1: float = 1.0
    kappa2: float = math.sqrt(2)
    # Backlund parameters
    rho: float = 0.0
    delta_rho: float = 1.1
    gamma: float = math.pi / 2
    sign_x: int = 1
    sign_y: int = 1
    # numerics
    nx: int = 64
    ny: int = 64
    kmax: int = 32
    gl_order: int = 12
    panel: float = 0.5
    tail: float = 1e-12
    check: bool = True
    dt: float = 1e-3
    t_final: float = 1.0
    t0: float = 0.0
    scheme: str = "etdrk4"
    snapshot_stride: int = 100
    initial: str = "orbit"  # orbit | circle
    t_list: str = "-2,-1,0,1,2"
    nf_kmax: int = 16
    omegas: str = ""
    delta_rhos: str = ""
    gammas: str = ""
    # output
    out: str = "dsii_out"
    format: str = "csv"


_CONSTS = {"pi": math.pi, "e": math.e}
_FUNCS = {"sqrt": math.sqrt, "sin": math.sin, "cos": math.cos, "exp": math.exp, "log": math.log}
_BIN = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow}


def eval_number(text: str) -> float:
    """Evaluate a small arithmetic expression such as ``sqrt(2)/2+0.11``."""

    def ev_(n):
        if isinstance(n, ast.Expression):
            return ev_(n.body)
        if isinstance(n, ast.Constant) and isinstance(n.value, (int, float)):
            return n.value
        if isinstance(n, ast.Name) and n.id in _CONSTS:
            return _CONSTS[n.id]
        if isinstance(n, ast.UnaryOp) and isinstance(n.op, (ast.USub, ast.UAdd)):
            v = ev_(n.operand)
            return -v if isinstance(n.op, ast.USub) else v
        if isinstance(n, ast.BinOp) and type(n.op) in _BIN:
            return _BIN[type(n.op)](ev_(n.left), ev_(n.right))
        if (isinstance(n, ast.Call) and isinstance(n.func, ast.Name) and n.func.id in _FUNCS
                and len(n.args) == 1 and not n.keywords):
            return _FUNCS[n.func.id](ev_(n.args[0]))
        raise ConfigError(f"unsupported expression: {text!r}")

    try:
        return float(ev_(ast.parse(text.strip(), mode="eval")))
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse number {text!r}") from exc


def _coerce(name, raw):
    types = {f.name: f.type for f in fields(RunConfig)}
    if name not in types:
        raise ConfigError(f"unknown config key {name!r}")
    kind = types[name]
    if kind == "bool":
        low = str(raw).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    if kind == "int":
        v = eval_number(str(raw))
        if v != int(v):
            raise ConfigError(f"{name}: expected an integer, got {raw!r}")
        return int(v)
    if kind == "float":
        return eval_number(str(raw))
    return str(raw).strip()


def parse_config_text(text: str) -> dict:
    out = {}
    for ln, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k] = _coerce(k, v)
    return out


def build_config(config_path=None, overrides=(), out=None, fmt=None) -> RunConfig:
    vals = {}
    if config_path:
        with open(config_path) as fh:
            vals.update(parse_config_text(fh.read()))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        vals[k.strip()] = _coerce(k.strip(), v)
    if out is not None:
        vals["out"] = out
    if fmt is not None:
        vals["format"] = fmt
    cfg = replace(RunConfig(), **vals)
    if cfg.format not in ("csv", "json"):
        raise ConfigError("format must be csv or json")
    return cfg


def parse_list(text: str, default):
    """'a,b,c' or 'lo:hi:n' (inclusive linspace)."""
    if not text:
        return list(default)
    if ":" in text:
        lo, hi, n = text.split(":")
        return [float(v) for v in np.linspace(eval_number(lo), eval_number(hi), int(n))]
    return [eval_number(v) for v in text.split(",") if v.strip()]


# serialization ---------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps(obj) -> str:
    # repr of a Python float is the shortest string that round-trips (<= 17 digits)
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def fmt17(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def table_text(header, rows, fmt):
    if fmt == "json":
        return dumps([dict(zip(header, r)) for r in rows])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt17(v) for v in r])
    return buf.getvalue()


def write(cfg, name, text):
    path = os.path.join(cfg.out, name)
    atomic_write(path, text)
    return path


def manifest(cfg, command, results, files, tolerances=None):
    return {
        "command": command,
        "inputs": {f.name: getattr(cfg, f.name) for f in fields(cfg)},
        "versions": {"dsii_lab": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "tolerances": tolerances or {},
        "results": results,
        "files": sorted(os.path.basename(f) for f in files),
    }


# helpers -------------------------------------------------------------------------

def _params(cfg, require_saddle=True):
    return md.validate_params(cfg.omega, cfg.alpha, cfg.beta, cfg.epsilon, cfg.kappa1,
                              cfg.kappa2, require_saddle=require_saddle)


def _dparams(cfg, omega=None, delta_rho=None, gamma=None):
    return dx.derive_params(cfg.omega if omega is None else omega, cfg.kappa1, cfg.kappa2,
                            rho=cfg.rho, delta_rho=cfg.delta_rho if delta_rho is None else delta_rho,
                            gamma=cfg.gamma if gamma is None else gamma,
                            sign_x=cfg.sign_x, sign_y=cfg.sign_y)


def _grid(cfg):
    return TorusGrid(cfg.nx, cfg.ny, cfg.kappa1, cfg.kappa2)


def _quad(cfg):
    return dict(order=cfg.gl_order, panel=cfg.panel, tail=cfg.tail, check=cfg.check)


def _tag(t):
    return f"{t:+.6f}".replace("+", "p").replace("-", "m").replace(".", "_")


# subcommands -------------------------------------------------------------------

def cmd_verify(cfg):
    from .checks import run_all

    params = _params(cfg)
    p = _dparams(cfg)
    results = run_all(params, p, _grid(cfg))
    width = max(len(r.name) for r in results)
    for r in results:
        print(f"{r.name:<{width}}  {'PASS' if r.passed else 'FAIL'}  {r.value:.3e} < {r.tol:.0e}")
    rows = [[r.name, r.value, r.tol, r.passed] for r in results]
    f1 = write(cfg, "verify." + cfg.format, table_text(["check", "value", "tol", "passed"], rows, cfg.format))
    ok = all(r.passed for r in results)
    write(cfg, "manifest.json", dumps(manifest(cfg, "verify", {"all_passed": ok}, [f1])))
    return 0 if ok else 2


def cmd_spectrum(cfg):
    params = _params(cfg, require_saddle=False)
    ents = md.linear_spectrum(params, cfg.kmax)
    rows = [[e.k[0], e.k[1], e.xi[0], e.xi[1], e.mu_plus, e.mu_minus] for e in ents]
    f1 = write(cfg, "spectrum." + cfg.format,
               table_text(["k1", "k2", "xi1", "xi2", "mu_plus", "mu_minus"], rows, cfg.format))
    unstable = [list(e.k) for e in ents if e.unstable]
    res = {"branch": params.branch, "unstable_modes": unstable}
    if params.alpha_damp * params.omega < params.beta_drive:
        s = md.saddle_state(params)
        r = md.refine_saddle(params)
        res["saddle"] = {"I": s.I_val, "theta": s.theta_val, "mu": list(s.mu_pair),
                         "I_refined": r.I_val, "truncation_error": abs(s.I_val - r.I_val)}
    write(cfg, "manifest.json", dumps(manifest(cfg, "spectrum", res, [f1])))
    print(f"branch={params.branch} unstable={unstable}")
    return 0


def cmd_orbit(cfg):
    p = _dparams(cfg)
    g = _grid(cfg)
    files, ts = [], parse_list(cfg.t_list, [0.0])
    for t in ts:
        s = dx.iterate_darboux(p, t, g, with_w=False)
        files.append(write(cfg, f"orbit_t{_tag(t)}.csv", snapshot_text(s.Q_field)))
    shifts = dx.phase_shift_limits(p)
    res = {"t_list": ts, "darboux_params": p.as_dict(), "phase_shift_check": shifts}
    write(cfg, "manifest.json", dumps(manifest(cfg, "orbit", res, files, {"phase_shift": 1e-10})))
    return 0 if max(shifts.values()) < 1e-10 else 2


def _components(cfg, p=None):
    p = p or _dparams(cfg)
    return mk.melnikov_components(p, _grid(cfg), **_quad(cfg))


def cmd_melnikov(cfg):
    p = _dparams(cfg)
    comp = _components(cfg, p)
    chi = mk.appendix_chi(comp, mk.delta_gamma(p))
    res = {"components": comp.as_dict(), "delta_gamma": mk.delta_gamma(p), "chi": chi.as_dict()}
    f1 = write(cfg, "melnikov.json", dumps(comp.as_dict()))
    write(cfg, "manifest.json", dumps(manifest(cfg, "melnikov", res, [f1])))
    print(dumps(comp.M.tolist()), end="")
    return 0


def cmd_solve_params(cfg):
    p = _dparams(cfg)
    comp = _components(cfg, p)
    sol = mk.solve_alpha_beta(comp, cfg.gamma)
    chi = mk.appendix_chi(comp, mk.delta_gamma(p))
    res = {"alpha": sol.alpha_star, "beta": sol.beta_star, "chi": chi.chi,
           "admissible": sol.admissible, "residual": list(sol.residual),
           "chi_solution": chi.as_dict(), "components": comp.M.tolist()}
    f1 = write(cfg, "params.json", dumps(res))
    write(cfg, "manifest.json", dumps(manifest(cfg, "solve-params", res, [f1])))
    print(f"alpha={sol.alpha_star:.6g} beta={sol.beta_star:.6g} chi={chi.chi:.6g} "
          f"admissible={sol.admissible}")
    return 0


def cmd_scan_domain(cfg):
    omegas = parse_list(cfg.omegas, [cfg.omega])
    drs = parse_list(cfg.delta_rhos, [cfg.delta_rho])
    gms = parse_list(cfg.gammas, [cfg.gamma])
    rows = mk.domain_scan(omegas, drs, gms, cfg.kappa1, cfg.kappa2, _grid(cfg), **_quad(cfg))
    header = ["omega", "delta_rho", "gamma", "alpha", "beta", "admissible", "flags"]
    f1 = write(cfg, "scan." + cfg.format, table_text(header, [[r[h] for h in header] for r in rows], cfg.format))
    res = {"cells": len(rows), "admissible": sum(r["admissible"] for r in rows),
           "flagged": sum(bool(r["flags"]) for r in rows)}
    write(cfg, "manifest.json", dumps(manifest(cfg, "scan-domain", res, [f1])))
    print(f"cells={res['cells']} admissible={res['admissible']} flagged={res['flagged']}")
    return 0


def cmd_simulate(cfg):
    params = _params(cfg, require_saddle=False)
    g = _grid(cfg)
    if cfg.initial == "orbit":
        q0 = dx.orbit(_dparams(cfg), cfg.t0, g)
    elif cfg.initial == "circle":
        from .spectral import TorusField
        q0 = TorusField(g, np.full((g.nx, g.ny), cfg.omega * np.exp(1j * cfg.gamma)), (True, True))
    else:
        raise ConfigError("initial must be 'orbit' or 'circle'")
    ecfg = ev.EvolutionConfig(cfg.dt, cfg.t_final, cfg.scheme, cfg.snapshot_stride)
    snaps = ev.integrate(q0, params, ecfg, t0=cfg.t0)
    files = [write(cfg, f"snap_t{_tag(t)}.csv", snapshot_text(f)) for t, f in snaps]
    res = {"n_snapshots": len(snaps), "t": [t for t, _ in snaps],
           "norm": [f.norm() for _, f in snaps]}
    write(cfg, "manifest.json", dumps(manifest(cfg, "simulate", res, files)))
    return 0


def cmd_normalform(cfg):
    params = _params(cfg, require_saddle=False)
    rep, tab = nf.lattice_scan(params, cfg.nf_kmax)
    maxK = np.abs(tab["x"]).max(axis=1)
    rows = zip(tab["k"][:, 0], tab["k"][:, 1], tab["ell"][:, 0], tab["ell"][:, 1],
               tab["cond"], tab["residual"], maxK)
    header = ["k1", "k2", "l1", "l2", "cond", "residual", "maxK"]
    f1 = write(cfg, "normalform_pairs." + cfg.format, table_text(header, list(rows), cfg.format))
    f2 = write(cfg, "normalform_summary.json", dumps(rep))
    write(cfg, "manifest.json", dumps(manifest(cfg, "normalform",
                                               {k: rep[k] for k in ("n_pairs", "n_singular", "n_near_singular",
                                                                    "max_residual_well_conditioned",
                                                                    "exponent_range")}, [f1, f2])))
    print(f"pairs={rep['n_pairs']} singular={rep['n_singular']} near_singular={rep['n_near_singular']}")
    return 0


COMMANDS = {"verify": cmd_verify, "spectrum": cmd_spectrum, "orbit": cmd_orbit,
            "melnikov": cmd_melnikov, "solve-params": cmd_solve_params,
            "scan-domain": cmd_scan_domain, "simulate": cmd_simulate, "normalform": cmd_normalform}


def build_parser():
    ap = argparse.ArgumentParser(prog="dsii-lab", description=__doc__)
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="flat key=value file")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--format", choices=("csv", "json"))
        sp.add_argument("-v", "--verbose", action="store_true")
        sp.add_argument("overrides", nargs="*", metavar="key=value")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = build_config(args.config, args.overrides, args.out, args.format)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return 1
    except DSIIError as exc:
        print(json.dumps({"error": exc.kind, "message": str(exc)}), file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(json.dumps({"error": "io", "message": str(exc)}), file=sys.stderr)
        return 3
    except ValueError as exc:
        print(json.dumps({"error": "validation", "message": str(exc)}), file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
