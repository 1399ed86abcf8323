"""Command line front end: config parsing, dispatch, deterministic reports.

Config files are INI style (one ``key = value`` per line under ``[section]`` headers)::

    [run]
    mode = solve-pinned
    seed = 0
    [grid]
    X = 50
    N = 2001
    [frac]
    s = 0.75
    [potential]
    name = quadratic-well
    [pin]
    a = -1
    b = 1
    datum = 1

Exit codes: 0 success, 2 iteration limit reached, 3 hypothesis or certificate failure,
4 configuration or I/O error.
"""

from __future__ import annotations

import argparse
import configparser
import inspect
import json
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import certify, energy, frac_ops, mp_solver, pinned_solver, potentials
from .grid_core import Grid, GridFunction, atomic_write_text, fmt, read_csv, write_csv

MODES = ("solve-pinned", "solve-confined", "layer", "certify", "validate", "scaling-experiment")
EXIT_OK, EXIT_MAXITER, EXIT_HYPOTHESIS, EXIT_CONFIG = 0, 2, 3, 4


class ConfigError(Exception):
    def __init__(self, msg, line=None, col=None, path="<config>"):
        self.msg, self.line, self.col, self.path = msg, line, col, path
        loc = f"{path}:{line}:{col}: " if line is not None else f"{path}: "
        super().__init__(loc + msg)


def _pos_float(v):
    v = float(v)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _float_list(v):
    out = [float(t) for t in v.replace(";", ",").split(",") if t.strip()]
    if not out:
        raise ValueError("empty list")
    return out


def _odd_int(v):
    v = int(v)
    if v < 3 or v % 2 == 0:
        raise ValueError("must be odd and >= 3")
    return v


def _pos_int(v):
    v = int(v)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _mode(v):
    if v not in MODES:
        raise ValueError(f"must be one of {', '.join(MODES)}")
    return v


def _unit_open(v):
    v = float(v)
    if not 0 < v < 1:
        raise ValueError("must lie in (0, 1)")
    return v


SCHEMA = {
    "run": {"mode": _mode, "seed": int},
    "grid": {"X": _pos_float, "N": _odd_int, "h": _pos_float},
    "frac": {"s": _unit_open, "c_s": _pos_float, "split_radius": _pos_int},
    "pin": {"a": float, "b": float, "datum": float, "alpha": _unit_open,
            "beta_bar": _unit_open},
    "solver": {"tol": _pos_float, "max_iter": _pos_int, "memory": _pos_int, "k_cut": _pos_int,
               "energy_floor": float, "P": _pos_int, "max_sweeps": _pos_int,
               "reparam_every": _pos_int, "stagnation": _pos_int, "t_half": _pos_float,
               "k_max": _pos_int},
    "certify": {"A_mult": _pos_float, "etas": _float_list, "K": _pos_float},
    "scaling": {"M": float, "eps": _float_list, "well_scale": _pos_float},
}
CATALOG_SECTIONS = ("potential", "matrix")


@dataclass
class RunConfig:
    mode: str
    seed: int = 0
    sections: dict = field(default_factory=dict)
    path: str = "<config>"

    def get(self, section, key, default=None):
        return self.sections.get(section, {}).get(key, default)

    def echo(self) -> dict:
        return {"mode": self.mode, "seed": self.seed, **{k: v for k, v in self.sections.items()}}


def _locate(text: str, section: str, key: str | None):
    """(line, col) of a key inside a section, or of the section header."""
    current = None
    for ln, raw in enumerate(text.splitlines(), 1):
        s = raw.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
            if key is None and current == section:
                return ln, raw.index("[") + 1
            continue
        if current == section and key is not None and "=" in s:
            k = s.split("=", 1)[0].strip()
            if k == key:
                return ln, raw.index(k) + 1
    return None, None


def _catalog_params(section: str, name: str):
    lib = potentials.builtin_library()
    if name not in lib:
        raise ValueError(f"unknown {section} {name!r}; known: {', '.join(sorted(lib))}")
    return lib[name], inspect.signature(lib[name]).parameters


def parse_config(text: str, path: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, strict=True,
                                   inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=path)
    except configparser.MissingSectionHeaderError as e:
        raise ConfigError("key outside any [section]", e.lineno, 1, path) from None
    except configparser.ParsingError as e:
        ln, line = e.errors[0]
        raise ConfigError(f"cannot parse {line.strip()!r}", ln, 1, path) from None
    except configparser.DuplicateOptionError as e:
        raise ConfigError(f"duplicate key {e.option!r}", e.lineno, 1, path) from None
    except configparser.DuplicateSectionError as e:
        raise ConfigError(f"duplicate section [{e.section}]", e.lineno, 1, path) from None

    sections = {}
    for sec in cp.sections():
        if sec not in SCHEMA and sec not in CATALOG_SECTIONS:
            ln, col = _locate(text, sec, None)
            raise ConfigError(f"unknown section [{sec}]", ln, col, path)
        vals = {}
        if sec in CATALOG_SECTIONS:
            if "name" not in cp[sec]:
                ln, col = _locate(text, sec, None)
                raise ConfigError(f"[{sec}] needs a name", ln, col, path)
            try:
                _, params = _catalog_params(sec, cp[sec]["name"])
            except ValueError as e:
                ln, col = _locate(text, sec, "name")
                raise ConfigError(str(e), ln, col, path) from None
        for key, raw in cp[sec].items():
            ln, col = _locate(text, sec, key)
            if sec in CATALOG_SECTIONS:
                if key == "name":
                    vals[key] = raw
                    continue
                if key not in params:
                    raise ConfigError(f"unknown key {key!r} for {cp[sec]['name']}", ln, col, path)
                conv = int if key == "n" else float
            else:
                if key not in SCHEMA[sec]:
                    raise ConfigError(f"unknown key {key!r} in [{sec}]", ln, col, path)
                conv = SCHEMA[sec][key]
            try:
                vals[key] = conv(raw)
            except ValueError as e:
                raise ConfigError(f"bad value for {key!r}: {e}", ln, col, path) from None
        sections[sec] = vals
    run = sections.pop("run", {})
    if "mode" not in run:
        raise ConfigError("missing [run] mode", None, None, path)
    if "grid" in sections and "N" in sections["grid"] and "h" in sections["grid"]:
        ln, col = _locate(text, "grid", "h")
        raise ConfigError("give either N or h, not both", ln, col, path)
    return RunConfig(run["mode"], run.get("seed", 0), sections, path)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e.strerror}", None, None, str(path)) from None
    return parse_config(text, str(path))


# ---- JSON ------------------------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if obj is None or isinstance(obj, str):
        return obj
    return str(obj)


def _encode(obj, indent=0):
    pad, inner = "  " * indent, "  " * (indent + 1)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(k)}: {_encode(obj[k], indent + 1)}" for k in sorted(obj)]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, list):
        if not obj:
            return "[]"
        return "[" + ", ".join(_encode(v, indent + 1) for v in obj) + "]"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, float):
        if math.isnan(obj):
            return '"NaN"'
        if math.isinf(obj):
            return '"Infinity"' if obj > 0 else '"-Infinity"'
        return fmt(obj)
    return json.dumps(obj)


def dumps(obj) -> str:
    """Sorted keys, 17 significant digits, non-finite floats as strings."""
    return _encode(_plain(obj)) + "\n"


def write_json(path, obj):
    atomic_write_text(path, dumps(obj))


# ---- builders ---------------------------------------------------------------------------

def _grid(cfg: RunConfig, X=None, N=None) -> Grid:
    g = cfg.sections.get("grid", {})
    X = g.get("X", X)
    if X is None:
        raise ConfigError("[grid] X is required", path=cfg.path)
    if "h" in g:
        return Grid.from_spacing(X, g["h"])
    N = g.get("N", N)
    if N is None:
        raise ConfigError("[grid] N or h is required", path=cfg.path)
    return Grid(X, N)


def _frac(cfg: RunConfig) -> frac_ops.FracParams:
    f = cfg.sections.get("frac", {})
    if "s" not in f:
        raise ConfigError("[frac] s is required", path=cfg.path)
    return frac_ops.FracParams(f["s"], f.get("c_s"), f.get("split_radius", 1))


def _catalog(cfg: RunConfig, section: str, default: str):
    sec = dict(cfg.sections.get(section, {"name": default}))
    ctor, _ = _catalog_params(section, sec.pop("name"))
    return ctor(**sec)


def _report(cfg, payload) -> dict:
    return {**payload, "config": cfg.echo(), "seed": cfg.seed}


# ---- modes -----------------------------------------------------------------------------

def run_solve_pinned(cfg: RunConfig, out: str) -> int:
    grid, p = _grid(cfg), _frac(cfg)
    V = _catalog(cfg, "potential", "quadratic-well")
    if not isinstance(V, potentials.PinnedPotential):
        raise ConfigError("solve-pinned needs a pinned potential", path=cfg.path)
    hyp = potentials.check_V(V, seed=cfg.seed)
    if not hyp.passed:
        write_json(os.path.join(out, "report.json"), _report(cfg, {"hypotheses": hyp.__dict__}))
        return EXIT_HYPOTHESIS
    pin = cfg.sections.get("pin", {})
    a, b = pin.get("a", -1.0), pin.get("b", 1.0)
    prob = pinned_solver.PinnedProblem.constant(
        grid, p, V, a, b, pin.get("datum", 1.0), holder_alpha=pin.get("alpha", 0.5),
        beta_bar=pin.get("beta_bar"))
    so = cfg.sections.get("solver", {})
    opts = pinned_solver.SolverOptions(
        tol=so.get("tol", 1e-6), max_iter=so.get("max_iter", 20000), memory=so.get("memory", 10),
        k_cut=so.get("k_cut", 10), energy_floor=so.get("energy_floor", -1e12), seed=cfg.seed)
    q, rep = pinned_solver.solve_pinned(prob, opts)
    write_csv(q, os.path.join(out, "profile.csv"))
    d = rep.as_dict()
    d["hypotheses"] = hyp.__dict__
    write_json(os.path.join(out, "report.json"), _report(cfg, d))
    return EXIT_OK if rep.converged else EXIT_MAXITER


def _confined_problem(cfg: RunConfig) -> mp_solver.ConfinedProblem:
    grid, p = _grid(cfg, X=12.0), _frac(cfg)
    W = _catalog(cfg, "potential", "power-W")
    L = _catalog(cfg, "matrix", "shifted-identity-L")
    if not isinstance(W, potentials.ConfinedPotential):
        raise ConfigError("this mode needs a confined potential", path=cfg.path)
    t_half = cfg.get("solver", "t_half", 4.0)
    return mp_solver.ConfinedProblem(grid, p, W, L, t_half=t_half)


def run_solve_confined(cfg: RunConfig, out: str) -> int:
    prob = _confined_problem(cfg)
    so = cfg.sections.get("solver", {})
    opts = mp_solver.MPOptions(P=so.get("P", 33), tol=so.get("tol", 1e-4),
                               max_sweeps=so.get("max_sweeps", 3000),
                               reparam_every=so.get("reparam_every", 50),
                               stagnation=so.get("stagnation", 400), seed=cfg.seed)
    q, rep, path = mp_solver.mountain_pass(prob, opts=opts)
    K = cfg.get("certify", "K", prob.grid.X / 3)
    audit = mp_solver.nontriviality_audit(q, prob, K)
    write_csv(q, os.path.join(out, "qcrit.csv"))
    lines = ["eta,energy"]
    P = path.P
    for i, nd in enumerate(path.nodes):
        lines.append(f"{fmt(i / (P - 1))},{fmt(prob.energy(nd.values.reshape(-1)))}")
    atomic_write_text(os.path.join(out, "path_energy.csv"), "\n".join(lines) + "\n")
    d = rep.as_dict()
    d["audit"] = audit.__dict__
    write_json(os.path.join(out, "mp_report.json"), _report(cfg, d))
    return EXIT_OK if rep.converged else EXIT_MAXITER


def run_layer(cfg: RunConfig, out: str) -> int:
    s = _frac(cfg).s
    grid = _grid(cfg) if "grid" in cfg.sections else None
    lay = certify.layer_solution(s, grid)
    lines = ["x,layer,derivative,a"]
    for xi, u, b, a in zip(lay.x, lay.profile.values[:, 0], lay.beta, lay.a):
        lines.append(",".join(fmt(v) for v in (xi, u, b, a)))
    atomic_write_text(os.path.join(out, "layer.csv"), "\n".join(lines) + "\n")
    write_json(os.path.join(out, "layer_report.json"), _report(cfg, lay.as_dict()))
    return EXIT_OK


def run_certify(cfg: RunConfig, out: str, profile: str | None) -> int:
    if profile is None:
        raise ConfigError("certify needs --profile", path=cfg.path)
    try:
        q = read_csv(profile)
    except OSError as e:
        raise ConfigError(f"cannot read profile: {e.strerror}", path=profile) from None
    p = _frac(cfg)
    W = _catalog(cfg, "potential", "power-W")
    L = _catalog(cfg, "matrix", "shifted-identity-L")
    prob = mp_solver.ConfinedProblem(q.grid, p, W, L, t_half=cfg.get("solver", "t_half", 4.0))
    result = {"profile": os.path.basename(profile)}
    ok = True
    if p.s <= 0.5:
        tr = certify.degiorgi_verify(q, p.s, k_max=cfg.get("solver", "k_max", 40),
                                     t_half=prob.t_half)
        result["degiorgi"] = tr.as_dict()
        ok &= tr.admissible and tr.bound_holds
        lay = certify.layer_solution(p.s)
        result["layer"] = lay.as_dict()
        etas = cfg.get("certify", "etas", [0.1, 0.01, 0.001])
        A_mult = cfg.get("certify", "A_mult", 2.0)
        sweep = certify.barrier_sweep(q, lay, L, W, etas, A_mult, sup_bound=tr.bound)
        result["barriers"] = [c.as_dict() for c in sweep]
        ok &= all(c.passed for c in sweep)
    else:
        result["note"] = "s > 1/2: boundedness follows from the L-infinity embedding"
        result["dual_residual"] = prob.dual_norm(q.values.reshape(-1))
    pp = certify.positive_part_membership(q, L, 0.5 * max(q.sup(), 1e-300), p) \
        if L.nonnegative else None
    if pp is not None:
        result["positive_part"] = pp.__dict__
    result["passed"] = bool(ok)
    write_json(os.path.join(out, "certificate.json"), _report(cfg, result))
    return EXIT_OK if ok else EXIT_HYPOTHESIS


def run_scaling(cfg: RunConfig, out: str) -> int:
    s = _frac(cfg).s
    sc = cfg.sections.get("scaling", {})
    M = sc.get("M", 1.0)
    V = potentials.quadratic_well(R=abs(M), scale=sc.get("well_scale", 0.01))
    grid = _grid(cfg, X=2.0, N=8001)
    res = pinned_solver.scaling_experiment(s, M, sc.get("eps", [1.0, 0.5, 0.25, 0.125]),
                                           V=V, grid=grid)
    write_json(os.path.join(out, "scaling.json"), _report(cfg, res.__dict__))
    return EXIT_OK


# ---- validate --------------------------------------------------------------------------

def _suite_cutoff(rng, cases=60):
    worst = -math.inf
    g = Grid(4.0, 201)
    for s in (0.25, 0.5, 0.75):
        p = frac_ops.FracParams(s)
        for _ in range(cases):
            q = GridFunction(g, rng.normal(0, 2, (g.N, 1)))
            R = rng.uniform(0.1, 2.0)
            a, b = frac_ops.gagliardo_sq(potentials.cutoff_TR(q, R), p), frac_ops.gagliardo_sq(q, p)
            worst = max(worst, (a - b) / b)
    return worst <= 1e-12, worst


def _suite_gradient(rng, cases=10):
    g = Grid(3.0, 121)
    p = frac_ops.FracParams(0.6)
    V = potentials.quadratic_well()
    W, L = potentials.power_W(), potentials.shifted_identity_L()
    worst = 0.0
    for _ in range(cases):
        q = GridFunction(g, rng.normal(0, 0.5, (g.N, 1)))
        psi = GridFunction(g, rng.normal(0, 1, (g.N, 1)))
        t = 1e-5
        for E, res in ((lambda u: energy.energy_pinned(u, V, p).total,
                        energy.pinned_residual(q, V, p)),
                       (lambda u: energy.energy_confined(u, W, L, p).total,
                        energy.confined_residual(q, W, L, p))):
            fd = (E(q.with_values(q.values + t * psi.values))
                  - E(q.with_values(q.values - t * psi.values))) / (2 * t)
            an = g.h * float(np.sum(res * psi.values))
            worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    return worst <= 1e-5, worst


def _suite_hypotheses(seed):
    out = {}
    for name, ctor in potentials.builtin_library().items():
        try:
            ctor()
            out[name] = True
        except potentials.HypothesisError:
            out[name] = False
    return all(out.values()), out


def run_validate(cfg: RunConfig, out: str) -> int:
    rng = np.random.default_rng(cfg.seed)
    suites = {}
    for name, fn in (("cutoff_monotonicity", lambda: _suite_cutoff(rng)),
                     ("gradient_consistency", lambda: _suite_gradient(rng)),
                     ("catalog_hypotheses", lambda: _suite_hypotheses(cfg.seed))):
        ok, detail = fn()
        suites[name] = {"passed": bool(ok), "detail": detail}
    boot, lim = pinned_solver.bootstrap_exponents(0.4, 0.5, 0.4)
    suites["bootstrap"] = {"passed": len(boot) == 3 and boot[-1] > 1 and lim == 1.6,
                           "detail": {"sequence": boot, "limit": lim}}
    allok = all(v["passed"] for v in suites.values())
    write_json(os.path.join(out, "validate.json"), _report(cfg, {"suites": suites,
                                                                 "passed": allok}))
    return EXIT_OK if allok else EXIT_HYPOTHESIS


# ---- entry point ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fraclinic",
                                 description="Fractional heteroclinic/homoclinic solvers")
    ap.add_argument("mode", choices=MODES)
    ap.add_argument("--config", required=True, help="INI-style run configuration")
    ap.add_argument("--out", default=".", help="artifact directory")
    ap.add_argument("--profile", help="profile CSV (certify mode)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if cfg.mode != args.mode:
            raise ConfigError(f"config mode {cfg.mode!r} does not match {args.mode!r}",
                              path=cfg.path)
        os.makedirs(args.out, exist_ok=True)
        handlers = {
            "solve-pinned": lambda: run_solve_pinned(cfg, args.out),
            "solve-confined": lambda: run_solve_confined(cfg, args.out),
            "layer": lambda: run_layer(cfg, args.out),
            "certify": lambda: run_certify(cfg, args.out, args.profile),
            "validate": lambda: run_validate(cfg, args.out),
            "scaling-experiment": lambda: run_scaling(cfg, args.out),
        }
        return handlers[args.mode]()
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except potentials.HypothesisError as e:
        print(f"hypothesis check failed: {e}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
