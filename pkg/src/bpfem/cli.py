"""Configuration files, experiment drivers and the command line interface.

Config files are UTF-8, one ``key = value`` per line, ``#`` starts a comment.
Numeric values may be simple arithmetic in ``pi`` and ``e`` (``T = pi/2``).

Required keys: problem, mesh, n, element, scheme, theta, dt, T.
Optional keys (defaults): gamma (0.05 smooth / 0.001 rotation), alpha (1),
omega (0.1 smooth; 0.12 rotation with P1/P2, 0.07 with Q1), tol (1e-8),
max_iter (500), output_dir (output), snapshot_stride (1; 0 disables VTK),
stab_dt_factor (dt), section_y (none), section_npoints (10000).
"""

from __future__ import annotations

import argparse
import ast
import csv
import json
import logging
import math
import operator
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import analysis
from .fe_space import P1, P2, Q1, build_space, interpolate
from .mesh import build_mesh
from .problems import PRESETS, preset
from .stepper import SchemeConfig, run
from .vtk import write_vtk

log = logging.getLogger(__name__)

REQUIRED = ("problem", "mesh", "n", "element", "scheme", "theta", "dt", "T")


class ConfigError(ValueError):
    def __init__(self, message, key=None, line=None):
        where = []
        if key is not None:
            where.append(f"key {key!r}")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.key = key
        self.line = line


_OPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
        ast.Div: operator.truediv, ast.Pow: operator.pow, ast.USub: operator.neg,
        ast.UAdd: operator.pos}
_NAMES = {"pi": math.pi, "e": math.e}


def _number(text: str) -> float:
    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id in _NAMES:
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _OPS:
            return _OPS[type(node.op)](ev(node.operand))
        raise ValueError(f"unsupported expression {text!r}")
    return float(ev(ast.parse(text.strip(), mode="eval")))


def _integer(text: str) -> int:
    v = _number(text)
    if v != int(v):
        raise ValueError(f"{text!r} is not an integer")
    return int(v)


@dataclass
class RunConfig:
    problem: str
    mesh: str
    n: int
    element: str
    scheme: str
    theta: float
    dt: float
    T: float
    gamma: Optional[float] = None
    alpha: float = 1.0
    omega: Optional[float] = None
    tol: float = 1e-8
    max_iter: int = 500
    output_dir: str = "output"
    snapshot_stride: int = 1
    stab_dt_factor: str = "dt"
    section_y: Optional[float] = None
    section_npoints: int = 10000

    def __post_init__(self):
        if self.problem not in PRESETS:
            raise ConfigError(f"unknown problem {self.problem!r}", "problem")
        if self.element not in (P1, P2, Q1):
            raise ConfigError(f"unknown element {self.element!r}", "element")
        if self.mesh not in ("delaunay", "non_delaunay", "quadrilateral"):
            raise ConfigError(f"unknown mesh {self.mesh!r}", "mesh")
        if (self.element == Q1) != (self.mesh == "quadrilateral"):
            raise ConfigError(f"element {self.element} does not fit mesh {self.mesh}", "element")
        if self.n < 2:
            raise ConfigError("n must be >= 2", "n")
        if self.gamma is None:
            self.gamma = 0.05 if self.problem == "smooth" else 0.001
        if self.omega is None:
            if self.problem == "smooth":
                self.omega = 0.1
            else:
                self.omega = 0.07 if self.element == Q1 else 0.12
        if self.snapshot_stride < 0:
            raise ConfigError("snapshot_stride must be >= 0", "snapshot_stride")
        if self.section_npoints < 2:
            raise ConfigError("section_npoints must be >= 2", "section_npoints")
        try:
            self.scheme_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def scheme_config(self) -> SchemeConfig:
        return SchemeConfig(theta=self.theta, dt=self.dt, T=self.T, gamma=self.gamma,
                            alpha=self.alpha, omega=self.omega, tol=self.tol,
                            max_iter=self.max_iter, scheme=self.scheme,
                            stab_dt_factor=self.stab_dt_factor)


_PARSERS = {
    "problem": str, "mesh": str, "element": str, "scheme": str, "output_dir": str,
    "stab_dt_factor": str, "n": _integer, "max_iter": _integer, "snapshot_stride": _integer,
    "section_npoints": _integer,
}


def parse_config(text: str) -> RunConfig:
    values, lines = {}, {}
    known = {f.name for f in fields(RunConfig)}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError("unknown key", key, lineno)
        if key in values:
            raise ConfigError("duplicate key", key, lineno)
        try:
            values[key] = _PARSERS.get(key, _number)(value)
        except (ValueError, SyntaxError, ZeroDivisionError, TypeError) as exc:
            raise ConfigError(f"cannot parse value {value!r}: {exc}", key, lineno) from None
        lines[key] = lineno
    for key in REQUIRED:
        if key not in values:
            raise ConfigError("missing required key", key)
    try:
        return RunConfig(**values)
    except ConfigError as exc:
        if exc.key in lines and exc.line is None:
            raise ConfigError(str(exc).split(" (key")[0], exc.key, lines[exc.key]) from None
        raise


def format_config(cfg: RunConfig) -> str:
    out = []
    for k, v in asdict(cfg).items():
        if v is None:
            continue
        out.append(f"{k} = {v!r}" if isinstance(v, float) else f"{k} = {v}")
    return "\n".join(out) + "\n"


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


# ------------------------------------------------------------ experiments

def _fmt(v):
    return f"{v:.17g}" if isinstance(v, (float, np.floating)) else str(v)


def write_csv(path, header, rows):
    path = Path(path)
    try:
        with path.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


@dataclass
class RunResult:
    config: RunConfig
    h: float
    l2_error_final: Optional[float]
    energy_error: Optional[float]
    mean_iterations: float
    files: dict


def _setup(cfg: RunConfig):
    problem = preset(cfg.problem)
    mesh = build_mesh(cfg.mesh, cfg.n)
    space = build_space(mesh, cfg.element)
    return problem, mesh, space


def run_experiment(cfg: RunConfig, write_section: Optional[bool] = None,
                   write_vtk_files: bool = True) -> RunResult:
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    problem, mesh, space = _setup(cfg)
    scheme = cfg.scheme_config()

    mass = analysis.MassHistory()
    observers = [mass]
    energy = None
    if problem.exact is not None:
        energy = analysis.EnergyErrorObserver(problem, scheme.dt)
        observers.append(energy)
    vtk_files = []
    if write_vtk_files and cfg.snapshot_stride > 0:
        def dump(snap):
            if snap.step % cfg.snapshot_stride == 0 or snap.step == scheme.num_steps:
                vtk_files.append(write_vtk(out / f"field_{snap.step:06d}.vtk", space,
                                           snap.u_plus.coefficients))
        observers.append(dump)

    traj = run(problem, mesh, space, scheme, observers, keep_every=0)
    files = {"vtk": vtk_files}

    files["iterations"] = write_csv(out / "iterations.csv", ["step", "iterations", "residual"],
                                    [(r.step, r.iterations, r.residual) for r in traj.reports])
    m0 = mass.records[0][1]
    files["mass"] = write_csv(out / "mass.csv", ["t", "M", "M_r"],
                              [(t, m, m / m0 if m0 else float("nan")) for t, m in mass.records])
    l2 = en = None
    if energy is not None:
        l2 = energy.acc.final_l2
        en = energy.acc.energy_norm()
        files["errors"] = write_csv(out / "errors.csv",
                                    ["n", "h", "dt", "l2_error_final", "energy_error"],
                                    [(cfg.n, mesh.h, scheme.dt, l2, en)])
    if write_section if write_section is not None else cfg.section_y is not None:
        y = 0.75 if cfg.section_y is None else cfg.section_y
        x, v = analysis.cross_section(traj.final.u_plus, y, cfg.section_npoints)
        files["section"] = write_csv(out / "section.csv", ["x", "value"], zip(x, v))
        u0 = interpolate(space, problem.u0, 0.0)
        _, v0 = analysis.cross_section(u0, y, cfg.section_npoints)
        files["section_initial"] = write_csv(out / "section_initial.csv", ["x", "value"],
                                             zip(x, v0))
    iters = [r.iterations for r in traj.reports]
    summary = {"mean_iterations": float(np.mean(iters)), "max_iterations": int(max(iters)),
               "steps": len(iters), "h": mesh.h, "dt": scheme.dt,
               "l2_error_final": l2, "energy_error": en,
               "min_u_plus": float(traj.final.u_plus.coefficients.min()),
               "max_u_plus": float(traj.final.u_plus.coefficients.max())}
    files["summary"] = out / "summary.json"
    files["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return RunResult(cfg, mesh.h, l2, en, summary["mean_iterations"], files)


def convergence_study(cfg: RunConfig, axis: str, levels, write_vtk_files: bool = False):
    """Run one level per mesh size (``axis='space'``) or time step (``axis='time'``)."""
    if axis not in ("space", "time"):
        raise ValueError(f"axis must be 'space' or 'time', got {axis!r}")
    levels = list(levels)
    if len(levels) < 2:
        raise ValueError("a convergence study needs at least two levels")
    if len(set(levels)) < 2:
        raise ValueError("degenerate study: all levels are equal")
    base = Path(cfg.output_dir)
    results = []
    for k, level in enumerate(levels):
        sub = dict(output_dir=str(base / f"level_{k}"))
        if axis == "space":
            sub["n"] = int(level)
        else:
            sub["dt"] = float(level)
        try:
            level_cfg = replace(cfg, **sub)
            results.append(run_experiment(level_cfg, write_section=False,
                                          write_vtk_files=write_vtk_files))
        except Exception as exc:
            raise RuntimeError(f"convergence level {k} ({axis}={level}) failed: {exc}") from exc
    if any(r.l2_error_final is None for r in results):
        raise ValueError(f"problem {cfg.problem!r} has no exact solution to measure errors")
    param = [r.h if axis == "space" else r.config.dt for r in results]
    l2_slope = analysis.convergence_slope(list(zip(param, [r.l2_error_final for r in results])))
    en_slope = analysis.convergence_slope(list(zip(param, [r.energy_error for r in results])))
    rows = [(k, r.config.n, r.h, r.config.dt, r.l2_error_final, r.energy_error, l2_slope, en_slope)
            for k, r in enumerate(results)]
    base.mkdir(parents=True, exist_ok=True)
    path = write_csv(base / "rates.csv", ["level", "n", "h", "dt", "l2_error_final",
                                          "energy_error", "l2_slope", "energy_slope"], rows)
    return path, l2_slope, en_slope


def mass_experiment(cfg: RunConfig):
    return run_experiment(cfg, write_section=False, write_vtk_files=False).files["mass"]


# -------------------------------------------------------------------- CLI

def _levels(values, axis):
    conv = int if axis == "space" else _number
    return [conv(v) for v in values]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="bpfem", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single run")
    p_run.add_argument("config")

    p_conv = sub.add_parser("converge", help="convergence study")
    p_conv.add_argument("config")
    p_conv.add_argument("--axis", choices=("space", "time"), required=True)
    p_conv.add_argument("--levels", nargs="+", required=True,
                        help="mesh divisions n (space) or time steps dt (time)")

    p_sec = sub.add_parser("section", help="cross section of the final solution")
    p_sec.add_argument("config")
    p_sec.add_argument("--y", type=float, default=0.75)
    p_sec.add_argument("--npoints", type=int, default=10000)

    p_mass = sub.add_parser("mass", help="relative mass history")
    p_mass.add_argument("config")

    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.command == "run":
            res = run_experiment(cfg)
            print(f"mean iterations {res.mean_iterations:.2f}; files in {cfg.output_dir}")
            if res.l2_error_final is not None:
                print(f"L2 error {res.l2_error_final:.6e}; energy error {res.energy_error:.6e}")
        elif args.command == "converge":
            path, l2s, ens = convergence_study(cfg, args.axis, _levels(args.levels, args.axis))
            print(f"L2 slope {l2s:.3f}; energy slope {ens:.3f}; written {path}")
        elif args.command == "section":
            cfg = replace(cfg, section_y=args.y, section_npoints=args.npoints)
            res = run_experiment(cfg, write_section=True, write_vtk_files=False)
            print(f"written {res.files['section']}")
        elif args.command == "mass":
            print(f"written {mass_experiment(cfg)}")
    except (ConfigError, OSError, RuntimeError, ValueError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
