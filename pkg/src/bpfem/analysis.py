"""Error norms, rates, cross sections, mass and stability bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .fe_space import FeFunction, evaluate


def default_error_order(degree: int) -> int:
    """Cell quadrature order for error norms.

    ``2k + 2`` is the minimum for smooth targets; the extra four orders make
    the norm insensitive (below 1e-10) to further refinement of the rule on
    the meshes used here.
    """
    return 2 * degree + 6


def _quad_data(space, order):
    q, w = space.cell_quadrature(order)
    val, grad, xq, det = space.tabulate(q)
    return w, val, grad, xq, det


def l2_error(u_plus: FeFunction, u_exact: Callable, t: float, order: Optional[int] = None) -> float:
    """``||u_plus - u_exact(., t)||_{L2}`` by cell quadrature (see :func:`default_error_order`)."""
    space = u_plus.space
    order = default_error_order(space.degree) if order is None else order
    w, val, _, xq, det = _quad_data(space, order)
    uh = np.einsum("qi,ci->cq", val, u_plus.coefficients[space.cell_dofs])
    ue = np.broadcast_to(u_exact(xq[..., 0], xq[..., 1], t), uh.shape)
    return math.sqrt(float(np.einsum("q,cq,c->", w, (uh - ue) ** 2, det)))


def h1_seminorm_error(u_plus: FeFunction, grad_exact: Callable, t: float,
                      order: Optional[int] = None) -> float:
    """``|u_plus - u_exact|_{H1}`` given the exact gradient ``(gx, gy)``."""
    space = u_plus.space
    order = default_error_order(space.degree) if order is None else order
    w, _, grad, xq, det = _quad_data(space, order)
    gh = np.einsum("cqia,ci->cqa", grad, u_plus.coefficients[space.cell_dofs])
    gx, gy = grad_exact(xq[..., 0], xq[..., 1], t)
    err = (gh[..., 0] - gx) ** 2 + (gh[..., 1] - gy) ** 2
    return math.sqrt(float(np.einsum("q,cq,c->", w, err, det)))


def field_l2_norm(space, g: Callable, t: float, order: Optional[int] = None) -> float:
    """L2 norm of an analytic field over the unit square, on the cells of ``space``."""
    order = default_error_order(space.degree) if order is None else order
    w, _, _, xq, det = _quad_data(space, order)
    gq = np.broadcast_to(g(xq[..., 0], xq[..., 1], t), xq.shape[:2])
    return math.sqrt(float(np.einsum("q,cq,c->", w, gq ** 2, det)))


@dataclass
class ErrorAccumulator:
    """Running ``dt * sum_n (eps|e_n|_1^2 + mu||e_n||^2 + J(e_n, e_n))`` plus the final L2 error."""

    total: float = 0.0
    final_l2: float = 0.0
    records: list = field(default_factory=list)

    def add(self, term: float, step: Optional[int] = None):
        if term < 0:
            raise ValueError(f"negative energy term {term}")
        self.total += term
        self.records.append((step, term))
        return self

    def energy_norm(self) -> float:
        return math.sqrt(self.final_l2 ** 2 + self.total)


def _quad_form(A, v):
    return float(v @ (A @ v))


def accumulate_energy_error(acc: ErrorAccumulator, e_h: FeFunction, eps: float, mu: float,
                            dt: float, Jmat, K=None, M=None) -> ErrorAccumulator:
    """Add ``dt(eps e'Ke + mu e'Me + e'Je)`` for an error already in the discrete space.

    ``K``/``M`` are only needed when ``eps``/``mu`` are nonzero.
    """
    e = e_h.coefficients
    term = _quad_form(Jmat, e)
    if eps:
        term += eps * _quad_form(K, e)
    if mu:
        term += mu * _quad_form(M, e)
    return acc.add(dt * max(term, 0.0))


def energy_error_term(u_plus: FeFunction, exact: Callable, grad_exact: Callable, t: float,
                      eps: float, mu: float, dt: float, Jmat) -> float:
    """One summand of the energy error against the exact solution.

    The exact solution is smooth, so its gradient has no jumps and
    ``J(e, e) = J(u_plus, u_plus)``.
    """
    term = _quad_form(Jmat, u_plus.coefficients)
    if eps:
        term += eps * h1_seminorm_error(u_plus, grad_exact, t) ** 2
    if mu:
        term += mu * l2_error(u_plus, exact, t) ** 2
    return dt * max(term, 0.0)


def convergence_slope(pairs) -> float:
    """Least-squares slope of ``log(error)`` against ``log(parameter)``."""
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 2:
        raise ValueError("need at least two (parameter, error) pairs")
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise ValueError("parameters and errors must be positive and finite")
    x, y = np.log(arr[:, 0]), np.log(arr[:, 1])
    if np.ptp(x) == 0:
        raise ValueError("degenerate study: all parameters are equal")
    return float(np.polyfit(x, y, 1)[0])


def cross_section(u: FeFunction, y: float, npoints: int):
    """``(x, u(x, y))`` at ``npoints`` equidistant x in [0, 1]."""
    if not 0.0 <= y <= 1.0:
        raise ValueError(f"y must lie in [0, 1], got {y}")
    if npoints < 2:
        raise ValueError("npoints must be >= 2")
    x = np.linspace(0.0, 1.0, int(npoints))
    return x, evaluate(u, np.column_stack([x, np.full_like(x, y)]))


def total_mass(u: FeFunction, M=None) -> float:
    """Integral of ``u`` over the domain (exact: the basis is a partition of unity)."""
    if M is None:
        from .forms import assemble_mass
        M = assemble_mass(u.space)
    return float(np.sum(M @ u.coefficients))


def relative_mass(u: FeFunction, M0: float, M=None) -> float:
    if M0 == 0:
        raise ValueError("reference mass must be nonzero")
    return total_mass(u, M) / M0


# ------------------------------------------------------------ observers

class StabilityMonitor:
    """Checks the implicit-Euler stability bound at every step of a run.

    Tracks ``max_m ||u_m+||^2 + 2 dt sum_n (eps|u_n+|_1^2 + mu||u_n+||^2 + J(u_n+, u_n+))``
    against ``e^2 (||u_h^0||^2 + dt T sum_n ||f^n||^2)``; ``f_norm(t)`` returns ``||f(., t)||``.
    """

    def __init__(self, eps, mu, dt, T, f_norm: Callable[[float], float]):
        self.eps, self.mu, self.dt, self.T = eps, mu, dt, T
        self.f_norm = f_norm
        self.max_sq = 0.0
        self.dissipation = 0.0
        self.forcing = 0.0
        self.initial_sq = None
        self.lhs, self.rhs = [], []

    def __call__(self, snap):
        forms = snap.forms
        up = snap.u_plus.coefficients
        if snap.step == 0:
            u0 = snap.u.coefficients
            self.initial_sq = _quad_form(forms.M, u0)
        l2sq = _quad_form(forms.M, up)
        if snap.step >= 1:
            self.max_sq = max(self.max_sq, l2sq)
        self.dissipation += 2 * self.dt * (self.eps * _quad_form(forms.K, up)
                                           + self.mu * l2sq + _quad_form(forms.Jmat, up))
        self.forcing += self.dt * self.T * self.f_norm(snap.t) ** 2
        if snap.step >= 1:
            self.lhs.append(self.max_sq + self.dissipation)
            self.rhs.append(math.e ** 2 * (self.initial_sq + self.forcing))

    def holds(self) -> bool:
        return bool(np.all(np.asarray(self.lhs) <= np.asarray(self.rhs)))


class NormHistory:
    """Records ``||u_m+||_{L2}`` for every snapshot."""

    def __init__(self):
        self.values = []

    def __call__(self, snap):
        up = snap.u_plus.coefficients
        self.values.append(math.sqrt(max(_quad_form(snap.forms.M, up), 0.0)))

    def max_increase(self) -> float:
        v = np.asarray(self.values)
        return float(np.max(np.diff(v), initial=-np.inf)) if len(v) > 1 else -np.inf


class ExtremaHistory:
    """Records nodal min/max of ``u_plus`` per snapshot."""

    def __init__(self):
        self.minima, self.maxima = [], []

    def __call__(self, snap):
        c = snap.u_plus.coefficients
        self.minima.append(float(c.min()))
        self.maxima.append(float(c.max()))


class MassHistory:
    """Records ``(t, M(t))`` of ``u_plus``."""

    def __init__(self):
        self.records = []

    def __call__(self, snap):
        self.records.append((snap.t, float(np.sum(snap.forms.M @ snap.u_plus.coefficients))))


class EnergyErrorObserver:
    """Accumulates the energy error of ``u_plus`` against an exact solution."""

    def __init__(self, problem, dt):
        self.problem = problem
        self.dt = dt
        self.acc = ErrorAccumulator()

    def __call__(self, snap):
        p = self.problem
        self.acc.add(energy_error_term(snap.u_plus, p.exact, p.exact_grad, snap.t,
                                       p.eps, p.mu, self.dt, snap.forms.Jmat), snap.step)
        self.acc.final_l2 = l2_error(snap.u_plus, p.exact, snap.t)
