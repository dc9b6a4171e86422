"""Batch entry point: ``slotjet {solve,trace,harmonic,render} --config run.cfg``.

The config file is flat UTF-8 ``key = value`` text, one pair per line, ``#``
starts a comment.  Numeric values may be arithmetic expressions in ``pi``,
``sqrt`` etc., e.g. ``theta = pi/3``.  ``Q = harmonic`` picks the flux that
gives lambda = 0 in the truncated domain.

Exit codes: 0 ok, 1 configuration/geometry, 2 convergence or bracketing,
3 invariant violation.  Failures print one ``CODE: message`` line on stderr.
"""

from __future__ import annotations

import argparse
import ast
import csv
import logging
import math
import operator
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import closedform as cf
from . import freeboundary as fb
from . import grid as gr
from . import shooting as sh
from . import velocity as vel
from .errors import (BracketError, ConfigError, ConvergenceError, GeometryError,
                     GridError, SlotJetError)
from .geometry import DomainSpec, validate

EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_INVARIANT = 1, 2, 3

GEOMETRY_KEYS = ("a", "b", "theta", "Q", "L", "mu", "rho_plus", "rho_minus", "downstream")
FLOAT_KEYS = GEOMETRY_KEYS + ("dx", "tol", "minimize_tol", "omega", "smoothing", "guess")
INT_KEYS = ("levels", "max_sweeps")
LIST_KEYS = ("Q_list",)
STR_KEYS = ("out",)
KNOWN = set(FLOAT_KEYS + INT_KEYS + LIST_KEYS + STR_KEYS)

_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow, ast.USub: operator.neg,
        ast.UAdd: operator.pos}
_NAMES = {"pi": math.pi, "e": math.e}
_FUNCS = {"sqrt": math.sqrt, "sin": math.sin, "cos": math.cos, "tan": math.tan,
          "atan": math.atan, "exp": math.exp, "log": math.log}


class InvariantError(SlotJetError):
    pass


def evaluate(text: str) -> float:
    """Arithmetic expression -> float; names limited to pi, e and a few functions."""
    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if (isinstance(node, ast.Call) and isinstance(node.func, ast.Name)
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords):
            return _FUNCS[node.func.id](ev(node.args[0]))
        raise ValueError("unsupported expression")
    try:
        return float(ev(ast.parse(text.strip(), mode="eval")))
    except (SyntaxError, ValueError, ZeroDivisionError, OverflowError, TypeError) as exc:
        raise ConfigError("BAD_VALUE", f"cannot evaluate {text!r}") from exc


@dataclass
class RunConfig:
    values: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.values.get(key, default)

    def require(self, key):
        if key not in self.values:
            raise ConfigError(f"MISSING_KEY:{key}", f"config has no {key!r}")
        return self.values[key]

    def spec(self, need_Q: bool = True) -> DomainSpec:
        geo = {k: self.require(k) for k in ("a", "b", "theta", "L")}
        geo["mu"] = self.get("mu", max(2.0 * geo["L"], 2.0))
        for k in ("rho_plus", "rho_minus", "downstream"):
            if k in self.values:
                geo[k] = self.values[k]
        Q = self.values.get("Q")
        if Q is None:
            if need_Q:
                self.require("Q")
            Q = 1.0
        elif Q == "harmonic":
            Q = cf.harmonic_flux_truncated(geo["a"], geo["b"], geo["theta"], geo["L"]).Q_star
        return validate(DomainSpec(Q=Q, **geo))


def parse_config(text: str) -> RunConfig:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("BAD_LINE", f"line {n}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN:
            raise ConfigError(f"UNKNOWN_KEY:{key}", f"line {n}")
        if key in out:
            raise ConfigError(f"DUPLICATE_KEY:{key}", f"line {n}")
        if key in STR_KEYS:
            out[key] = val
        elif key == "Q" and val == "harmonic":
            out[key] = val
        elif key in LIST_KEYS:
            out[key] = [evaluate(v) for v in val.split(",") if v.strip()]
        elif key in INT_KEYS:
            out[key] = int(evaluate(val))
        else:
            out[key] = evaluate(val)
    return RunConfig(out)


def load_config(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            return parse_config(fh.read())
    except OSError as exc:
        raise ConfigError("CONFIG_UNREADABLE", str(exc)) from exc
    except UnicodeDecodeError as exc:
        raise ConfigError("CONFIG_NOT_UTF8", str(exc)) from exc


def _dx(cfg: RunConfig, spec: DomainSpec, override):
    if override is not None:
        return override
    return cfg.get("dx", spec.d2 / 16)


def _fit_kw(cfg: RunConfig) -> dict:
    kw = {"tol": cfg.get("tol", 1e-3)}
    for key, name in (("minimize_tol", "minimize_tol"), ("max_sweeps", "max_sweeps"),
                      ("omega", "omega"), ("smoothing", "smoothing"), ("guess", "guess"),
                      ("levels", "levels")):
        if key in cfg.values:
            kw[name] = cfg.values[key]
    return kw


def report_rows(rep: sh.SolveReport) -> list:
    """Diagnostics of one fitted solution, in ``report.csv`` order."""
    spec, fld, c = rep.field.spec, rep.field, rep.coeffs
    jump = rep.jump()
    sand = fb.sandwich_check(fld, c)
    asym = fb.asymptotics_check(fld, c)
    pos = vel.positivity(vel.recover(fld), fld)
    # every minimisation run of the fit must have descended monotonically
    rises = sum(int(np.sum(np.diff(t.energies) > 1e-12)) for _, t in rep.traces)
    return [
        ("Q", float(spec.Q)), ("a", float(spec.a)), ("b", float(spec.b)),
        ("theta", float(spec.theta)), ("L", float(spec.L)), ("mu", float(spec.mu)),
        ("dx", float(rep.dx)), ("lambda", float(rep.lambda_star)), ("h", float(rep.h)),
        ("lambda1", float(c.lam1)), ("lambda2", float(c.lam2)),
        ("bracket_lo", float(rep.bracket[0])), ("bracket_hi", float(rep.bracket[1])),
        ("fit_residual", float(rep.fit_residual)), ("energy", float(rep.energy)),
        ("sweeps", int(rep.sweeps)), ("detachment_slope", float(rep.angle)),
        ("jump_median", float(jump.median)), ("jump_p90", float(jump.p90)),
        ("jump_samples", int(jump.n)),
        ("monotone_y_violations", fb.monotone_y_violations(fld)),
        ("box_ok", int(fld.box_ok(1e-12))), ("energy_increases", rises),
        ("sandwich_violations", sand.count),
        ("asymptotic_downstream", asym.downstream), ("asymptotic_upstream", asym.upstream),
        ("asymptotic_slot", asym.slot),
        ("u_nonpositive", pos.u_bad), ("v_nonpositive", pos.v_bad),
        ("residual_monotone", int(rep.monotone_scan)),
    ]


def hard_violations(rows) -> list:
    d = dict(rows)
    bad = []
    if not d["box_ok"]:
        bad.append("BOX_VIOLATION")
    if d["energy_increases"]:
        bad.append("ENERGY_INCREASE")
    if d["monotone_y_violations"]:
        bad.append("MONOTONE_Y")
    if abs(d["fit_residual"]) > d["dx"]:
        bad.append("FIT_RESIDUAL")
    return bad


def render(fld_xyz, curve_xy, path, title="") -> None:
    """Filled psi levels, the zero level and the extracted interface as SVG."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.tri import Triangulation

    matplotlib.rcParams["svg.hashsalt"] = "slotjet"
    x, y, psi = fld_xyz
    fig, ax = plt.subplots(figsize=(7, 5))
    tri = Triangulation(x, y)
    # drop triangles spanning a wall gap
    xt, yt = x[tri.triangles], y[tri.triangles]
    span = np.maximum(np.ptp(xt, axis=1), np.ptp(yt, axis=1))
    tri.set_mask(span > 1.5 * np.median(span))
    cs = ax.tricontourf(tri, psi, levels=24, cmap="RdBu_r")
    ax.tricontour(tri, psi, levels=[0.0], colors="k", linewidths=0.8)
    if curve_xy is not None and len(curve_xy[0]):
        ax.plot(curve_xy[0], curve_xy[1], "-", color="gold", lw=1.2, label="interface")
        ax.legend(loc="upper left", fontsize=8)
    fig.colorbar(cs, ax=ax, label="psi")
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    if title:
        ax.set_title(title, fontsize=9)
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _read_curve(path):
    xs, ks = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            xs.append(float(row["x"]))
            ks.append(float(row["k"]))
    return np.array(xs), np.array(ks)


def cmd_solve(cfg: RunConfig, out: str, dx=None) -> int:
    spec = cfg.spec()
    dx = _dx(cfg, spec, dx)
    kw = _fit_kw(cfg)
    rep = sh.solve(spec, dx, **kw)
    rows = report_rows(rep)
    os.makedirs(out, exist_ok=True)
    fb.dump_diagnostics(rows, os.path.join(out, "report.csv"))
    fb.dump_curve(rep.curve, os.path.join(out, "curve.csv"))
    gr.dump_csv(rep.field, os.path.join(out, "field.csv"))
    X, Y = rep.field.grid.mesh()
    act = rep.field.active
    render((X[act], Y[act], rep.field.values[act]), (rep.curve.x, rep.curve.k),
           os.path.join(out, "field.svg"), f"Q={spec.Q:.4g}  lambda*={rep.lambda_star:.4g}")
    print(f"lambda={rep.lambda_star:.9g} h={rep.h:.9g} fit_residual={rep.fit_residual:.3g}")
    bad = hard_violations(rows)
    if bad:
        raise InvariantError(bad[0], ", ".join(bad))
    return 0


def cmd_trace(cfg: RunConfig, out: str, dx=None) -> int:
    Q_list = cfg.require("Q_list")
    if len(Q_list) < 2:
        raise sh.TraceError("NEED_TWO_POINTS", "Q_list needs at least two values")
    spec = cfg.spec(need_Q=False).with_(Q=Q_list[0])
    dx = _dx(cfg, spec, dx)
    os.makedirs(out, exist_ok=True)
    path = os.path.join(out, "lambda_q.csv")
    try:
        curve = sh.trace(spec, Q_list, dx, **_fit_kw(cfg))
    except sh.TraceError as exc:
        if exc.partial is not None and exc.partial.samples:
            sh.dump_curve(exc.partial, path)
        raise
    sh.dump_curve(curve, path)
    verdict = "PASS" if curve.strictly_increasing() else "FAIL"
    print(f"{verdict} monotone lambda(Q) over {len(Q_list)} samples")
    if verdict == "FAIL":
        raise InvariantError("LAMBDA_NOT_INCREASING", "lambda(Q) is not strictly increasing")
    return 0


def cmd_harmonic(cfg: RunConfig, out=None, dx=None) -> int:
    a, b, theta = cfg.require("a"), cfg.require("b"), cfg.require("theta")
    validate(DomainSpec(a=a, b=b, theta=theta, Q=1.0, L=b + 1.0, mu=2.0))
    if "L" in cfg.values:
        t = cf.harmonic_flux_truncated(a, b, theta, cfg.values["L"])
        print(f"truncated Q_star={t.Q_star:.12f} residual={t.residual:.3e}")
    inf = cf.harmonic_flux(a, b, theta)
    print(f"infinite Q_star={inf.Q_star:.12f} residual={inf.residual:.3e}")
    return 0


def cmd_render(cfg: RunConfig, out: str, dx=None) -> int:
    fpath = os.path.join(out, "field.csv")
    if not os.path.exists(fpath):
        raise ConfigError("NO_FIELD", f"{fpath} not found; run solve first")
    x, y, psi, _ = gr.load_csv(fpath)
    cpath = os.path.join(out, "curve.csv")
    curve = _read_curve(cpath) if os.path.exists(cpath) else None
    render((x, y, psi), curve, os.path.join(out, "field.svg"))
    return 0


COMMANDS = {"solve": cmd_solve, "trace": cmd_trace, "harmonic": cmd_harmonic,
            "render": cmd_render}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slotjet", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="flat key = value file")
    p.add_argument("--out", default=None, help="output directory (default: config 'out' or .)")
    p.add_argument("--dx", type=float, default=None, help="grid spacing, overrides the config")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        out = args.out or cfg.get("out", ".")
        return COMMANDS[args.command](cfg, out, args.dx)
    except SlotJetError as exc:
        print(str(exc).splitlines()[0], file=sys.stderr)
        return exit_code(exc)


def exit_code(exc: SlotJetError) -> int:
    if isinstance(exc, sh.TraceError) and exc.__cause__ is not None:
        exc = exc.__cause__
    if isinstance(exc, (ConfigError, GeometryError, GridError)):
        return EXIT_CONFIG
    if isinstance(exc, sh.TraceError):
        return EXIT_CONFIG if exc.code in ("NEED_TWO_POINTS", "Q_NOT_INCREASING") \
            else EXIT_CONVERGENCE
    if isinstance(exc, (ConvergenceError, BracketError)):
        return EXIT_CONVERGENCE
    return EXIT_INVARIANT

if __name__ == "__main__":
    sys.exit(main())
