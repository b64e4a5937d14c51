"""Theta time stepping with nodal bound preservation.

Each bound-preserving step solves the nonlinear problem

    ((u)+, v) + dt*theta*a_J((u)+, v) + dt*s((u)-, v) = F(v)   for interior v

by damped Richardson iterations whose linear operator is the interior block
of ``M + dt*theta*(eps*K + C + mu*M + J)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional

import numpy as np

from .bounds import ADMISSIBLE_TOL, BoundSpec, clip
from .fe_space import FeFunction, FeSpace, interpolate
from .forms import AssembledForms, FormAssembler, load_vector, rhs_fn
from .linalg import Factorization
from .mesh import Mesh, compute_mesh_function

log = logging.getLogger(__name__)

BOUND_PRESERVING = "bound_preserving"
CIP_ONLY = "cip_only"
SCHEME_ALIASES = {"bp": BOUND_PRESERVING, "cip": CIP_ONLY,
                  BOUND_PRESERVING: BOUND_PRESERVING, CIP_ONLY: CIP_ONLY}


class NonConvergenceError(RuntimeError):
    def __init__(self, message, residual, step=None):
        where = "" if step is None else f" at step {step}"
        super().__init__(f"{message}{where} (last residual {residual:.3e})")
        self.residual = residual
        self.step = step


class StepError(RuntimeError):
    """Wraps a failure inside :func:`run` with the index of the failing step."""

    def __init__(self, step, cause):
        super().__init__(f"time step {step} failed: {cause}")
        self.step = step


@dataclass
class SchemeConfig:
    theta: float
    dt: float
    T: float
    gamma: float = 0.0
    alpha: float = 1.0
    omega: float = 0.1
    tol: float = 1e-8
    max_iter: int = 500
    scheme: str = BOUND_PRESERVING
    stab_dt_factor: str = "dt"

    def __post_init__(self):
        self.scheme = SCHEME_ALIASES.get(self.scheme, self.scheme)
        if self.scheme not in (BOUND_PRESERVING, CIP_ONLY):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [1/2, 1], got {self.theta}")
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("dt and T must be positive")
        ratio = self.T / self.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"T/dt = {ratio} is not an integer number of steps")
        if self.gamma < 0 or self.alpha < 0:
            raise ValueError("gamma and alpha must be non-negative")
        if not 0 < self.omega <= 1:
            raise ValueError(f"omega must lie in (0, 1], got {self.omega}")
        if not self.tol > 0 or self.max_iter < 1:
            raise ValueError("tol must be positive and max_iter >= 1")
        if self.stab_dt_factor not in ("dt", "one"):
            raise ValueError("stab_dt_factor must be 'dt' or 'one'")

    @property
    def num_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class StepReport:
    step: int
    iterations: int
    residual: float
    admissible: bool
    l2_plus: float
    equation_residual: float = 0.0


@dataclass(eq=False)
class StepOperators:
    """Everything one step needs: forms at ``t_{n-1}`` and ``t_n``, the load at
    ``t_{n-1+theta}`` and the factorized interior left-hand side."""

    prev: AssembledForms
    now: AssembledForms
    load: np.ndarray
    lhs: Factorization
    lhs_matrix: object
    mass_interior: object


class OperatorFactory:
    """Assembles :class:`StepOperators`, reusing the factorization when possible."""

    def __init__(self, space: FeSpace, problem, cfg: SchemeConfig, hfun=None):
        self.space = space
        self.problem = problem
        self.cfg = cfg
        self.hfun = hfun if hfun is not None else compute_mesh_function(space.mesh)
        self.assembler = FormAssembler(space, problem, self.hfun, cfg.gamma, cfg.alpha)
        self.interior = space.interior_dofs
        self._lhs_key = None
        self._lhs = None
        self.factorizations = 0
        I = self.interior
        self.mass_interior = self.assembler.M.tocsr()[I][:, I]

    def forms(self, t: float) -> AssembledForms:
        return self.assembler.at(t, self.cfg.dt)

    def __call__(self, t_n: float) -> StepOperators:
        cfg = self.cfg
        prev = self.forms(t_n - cfg.dt)
        now = self.forms(t_n)
        key = (cfg.dt, cfg.theta, None if self.problem.steady_beta else t_n)
        if key != self._lhs_key:
            I = self.interior
            L = (now.M + cfg.dt * cfg.theta * now.a_J()).tocsr()[I][:, I]
            self._lhs = (Factorization(L), L.tocsr())
            self._lhs_key = key
            self.factorizations += 1
        t_mid = t_n - (1.0 - cfg.theta) * cfg.dt
        load = load_vector(self.space, self.problem.f, t_mid)
        return StepOperators(prev, now, load, *self._lhs, self.mass_interior)


def project_interior(u: FeFunction, bounds: BoundSpec, t: float) -> FeFunction:
    """Constrained part of ``u``; boundary dofs stay at their homogeneous value 0."""
    lo, hi = bounds.at(t)
    I = u.space.interior_dofs
    plus = np.zeros(u.space.num_dofs)
    plus[I] = clip(u.coefficients[I], lo, hi)
    return FeFunction(u.space, plus)


def _rhs(u_prev: np.ndarray, ops: StepOperators, cfg: SchemeConfig, t_n: float, space):
    t_mid = t_n - (1.0 - cfg.theta) * cfg.dt
    F = rhs_fn(ops.prev, ops.load, cfg.theta, cfg.dt, t_mid, FeFunction(space, u_prev))
    return F[space.interior_dofs]


def step_bp(u_prev: FeFunction, ops: StepOperators, bounds: BoundSpec, cfg: SchemeConfig,
            t_n: float, step: Optional[int] = None):
    """One bound-preserving step; returns ``(u_n, report)`` with ``u_n`` unclipped."""
    space = u_prev.space
    I = space.interior_dofs
    F = _rhs(project_interior(u_prev, bounds, t_n - cfg.dt).coefficients, ops, cfg, t_n, space)

    lo, hi = bounds.at(t_n)
    d = ops.now.s_diag[I] * (cfg.dt if cfg.stab_dt_factor == "dt" else 1.0)
    L = ops.lhs_matrix
    M = ops.mass_interior
    u = u_prev.coefficients[I].copy()
    residual = np.inf
    for it in range(1, cfg.max_iter + 1):
        up = clip(u, lo, hi)
        r = F - L @ up - d * (u - up)
        du = cfg.omega * ops.lhs.solve(r)
        u += du
        residual = math.sqrt(max(float(du @ (M @ du)), 0.0))
        if residual <= cfg.tol:
            break
    else:
        raise NonConvergenceError(f"Richardson iteration did not converge in {cfg.max_iter} "
                                  "iterations", residual, step)

    up = clip(u, lo, hi)
    eq_res = float(np.max(np.abs(F - L @ up - d * (u - up)), initial=0.0))
    coeffs = np.zeros(space.num_dofs)
    coeffs[I] = u
    u_n = FeFunction(space, coeffs)
    admissible = bool(np.all(up >= lo - ADMISSIBLE_TOL) and np.all(up <= hi + ADMISSIBLE_TOL))
    report = StepReport(step if step is not None else -1, it, residual, admissible,
                        math.sqrt(max(float(up @ (M @ up)), 0.0)), eq_res)
    return u_n, report


def step_cip(u_prev: FeFunction, ops: StepOperators, cfg: SchemeConfig, t_n: float) -> FeFunction:
    """One linear theta step with CIP stabilization only."""
    space = u_prev.space
    F = _rhs(u_prev.coefficients, ops, cfg, t_n, space)
    coeffs = np.zeros(space.num_dofs)
    coeffs[space.interior_dofs] = ops.lhs.solve(F)
    return FeFunction(space, coeffs)


@dataclass
class Snapshot:
    step: int
    t: float
    u: FeFunction
    u_plus: FeFunction
    forms: AssembledForms
    report: Optional[StepReport] = None


@dataclass
class Trajectory:
    snapshots: list = field(default_factory=list)
    reports: list = field(default_factory=list)

    @property
    def final(self) -> Snapshot:
        return self.snapshots[-1]

    def mean_iterations(self) -> float:
        return float(np.mean([r.iterations for r in self.reports])) if self.reports else 0.0


def run(problem, mesh: Mesh, space: FeSpace, cfg: SchemeConfig,
        observers: Iterable[Callable[[Snapshot], None]] = (), keep_every: int = 1,
        hfun=None) -> Trajectory:
    """March ``cfg.num_steps`` steps from the interpolated initial datum.

    Every snapshot is passed to each observer; the trajectory keeps every
    ``keep_every``-th snapshot plus the last one. ``keep_every=0`` keeps only
    the initial and final snapshots.
    """
    if space.mesh is not mesh:
        raise ValueError("space is not built on the given mesh")
    observers = list(observers)
    factory = OperatorFactory(space, problem, cfg, hfun)
    bounds = problem.bounds
    bp = cfg.scheme == BOUND_PRESERVING

    u = interpolate(space, problem.u0, 0.0)
    u.coefficients[~space.interior_mask] = 0.0
    traj = Trajectory()

    def emit(n, t, u, forms, report):
        plus = project_interior(u, bounds, t) if bp else u
        snap = Snapshot(n, t, u, plus, forms, report)
        for obs in observers:
            obs(snap)
        last = n == cfg.num_steps
        if n == 0 or last or (keep_every and n % keep_every == 0):
            traj.snapshots.append(snap)

    emit(0, 0.0, u, factory.forms(0.0), None)
    for n in range(1, cfg.num_steps + 1):
        t_n = n * cfg.dt
        try:
            ops = factory(t_n)
            if bp:
                u, report = step_bp(u, ops, bounds, cfg, t_n, step=n)
                if not report.admissible:
                    raise RuntimeError("projected solution left the admissible set")
            else:
                u = step_cip(u, ops, cfg, t_n)
                I = space.interior_dofs
                Mi = ops.mass_interior
                ui = u.coefficients[I]
                lo, hi = bounds.at(t_n)
                report = StepReport(n, 1, 0.0, bool(np.all((ui >= lo - ADMISSIBLE_TOL)
                                                           & (ui <= hi + ADMISSIBLE_TOL))),
                                    math.sqrt(max(float(ui @ (Mi @ ui)), 0.0)))
        except (ArithmeticError, RuntimeError) as exc:
            raise StepError(n, exc) from exc
        traj.reports.append(report)
        emit(n, t_n, u, ops.now, report)
        log.debug("step %d t=%.6g iterations=%d residual=%.3e", n, t_n,
                  report.iterations, report.residual)
    return traj
